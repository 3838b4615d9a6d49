"""Command-line entry point: ``dualnews <command> [flags]``.

Exit codes: 0 success, 1 bad input (missing files, invalid config or data),
2 runtime failure (scorer unreachable, numerical blow-up, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .checkpoint import CheckpointError
from .config import ConfigError, PipelineConfig
from .corpus import CorpusError, SplitSpec, ingest_jsonl, scan_fakenewsnet, split, stats, stats_deltas, write_jsonl
from .evaluation import write_report, write_roc_csv
from .scoring import ScorerConfig, ScoringError, make_scorer, read_training_tsv, train_local_scorer
from .textprep import Vocab, build_vocab

log = logging.getLogger("dualnews")


class InputError(Exception):
    """Problem with user-supplied files or flags (exit code 1)."""


def _write_json(path: str | None, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _require_file(path: str | None, what: str) -> str:
    if not path:
        raise InputError(f"{what} is required")
    if not Path(path).is_file():
        raise InputError(f"{what} {path} does not exist")
    return path


def _vocab_for(records, vocab_path: str | None, max_words: int = 5000) -> Vocab:
    if vocab_path:
        return Vocab.load(_require_file(vocab_path, "--vocab"))
    return build_vocab([t for r in records for t in (r.headline, r.body)], max_words=max_words)


# -- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    if bool(args.root) == bool(args.jsonl):
        raise InputError("give exactly one of --root or --jsonl")
    dropped = None
    if args.root:
        if not Path(args.root).is_dir():
            raise InputError(f"--root {args.root} is not a directory")
        result = scan_fakenewsnet(args.root, args.content_name, args.workers)
        records, dropped = result.records, result.dropped
        if result.malformed:
            log.warning("%d malformed content files skipped", result.malformed)
    else:
        records = ingest_jsonl(_require_file(args.jsonl, "--jsonl"))
    write_jsonl(args.out, records)
    counts = stats(records, dropped)
    if args.stats_out:
        _write_json(args.stats_out, {"counts": counts, "deltas_vs_reference": stats_deltas(counts)})
    log.info("wrote %d records to %s", len(records), args.out)
    return 0


def cmd_split(args) -> int:
    records = ingest_jsonl(_require_file(args.in_path, "--in"))
    train, test = split(records, SplitSpec(args.fraction, args.seed, not args.no_stratify))
    write_jsonl(args.train_out, train)
    write_jsonl(args.test_out, test)
    log.info("split %d records into %d train / %d test", len(records), len(train), len(test))
    return 0


def cmd_select_span(args) -> int:
    if args.budget < 3:
        raise InputError(f"--budget must be >= 3, got {args.budget}")
    records = ingest_jsonl(_require_file(args.in_path, "--in"))
    vocab = _vocab_for(records, args.vocab)
    scorer = None
    if args.method == "maxworth":
        scfg = ScorerConfig(kind=args.scorer, endpoint=args.endpoint, cache_path=args.cache,
                            model_path=args.scorer_model, max_in_flight=args.max_in_flight,
                            min_request_interval=args.min_interval)
        errors = scfg.validate()
        if errors:
            raise InputError("; ".join(errors))
        scorer = make_scorer(scfg)
    out = []
    for rec in records:
        try:
            out.extend(pipeline.select_corpus([rec], args.method, args.budget - 2, vocab, scorer))
        except ScoringError as exc:
            raise ScoringError(f"record {rec.id}: {exc}", exc.failed) from exc
    write_jsonl(args.out, out)
    log.info("selected spans for %d records", len(out))
    return 0


def _pipeline_config(args, **extra) -> PipelineConfig:
    overrides = {
        "learning_rate": getattr(args, "lr", None),
        "val_fraction": getattr(args, "val_fraction", None),
        "epochs": getattr(args, "epochs", None),
        "seed": getattr(args, "seed", None),
        "preset": getattr(args, "preset", None),
        "variant": getattr(args, "variant", None),
        "selector": getattr(args, "selector", None),
        "vocab": getattr(args, "vocab", None),
        **extra,
    }
    if getattr(args, "post_ln", False):
        overrides["post_ln"] = True
    if getattr(args, "tied", False):
        overrides["tied_encoders"] = True
    if args.config and not Path(args.config).is_file():
        raise InputError(f"--config {args.config} does not exist")
    return PipelineConfig.load(args.config, overrides)


def cmd_train(args) -> int:
    cfg = _pipeline_config(args, train=args.train, out_dir=args.out_dir)
    records = ingest_jsonl(_require_file(cfg.train, "training corpus (--train or config 'train')"))
    out = Path(cfg.out_dir)
    vocab, vocab_path = pipeline.load_or_build_vocab(cfg, records, out)
    records = pipeline.ensure_spans(records, cfg.selector, cfg.selection_budget, vocab,
                                    lambda: make_scorer(cfg.scorer_config()))
    pipeline.run_training(cfg, records, out, vocab=vocab, vocab_path=vocab_path,
                          init_weights_path=args.init_weights)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    model, vocab, meta = pipeline.load_model(_require_file(args.checkpoint, "--checkpoint"), args.vocab)
    records = ingest_jsonl(_require_file(args.test, "--test"))
    budget = int(meta.get("budget") or model.config.body_max) - 2
    records = pipeline.ensure_spans(records, meta.get("selector", "head"), budget, vocab,
                                    lambda: pipeline.scorer_from_meta(meta))
    examples = pipeline.encode_records(records, vocab, model.config)
    name = args.name or model.config.variant
    report, curve = pipeline.evaluate_model(model, examples, name, args.threshold)
    if args.report_out:
        Path(args.report_out).parent.mkdir(parents=True, exist_ok=True)
        write_report(args.report_out, report)
    else:
        _write_json(None, report.to_dict())
    if args.roc_out:
        Path(args.roc_out).parent.mkdir(parents=True, exist_ok=True)
        write_roc_csv(args.roc_out, curve)
    return 0


def cmd_predict(args) -> int:
    model, vocab, meta = pipeline.load_model(_require_file(args.checkpoint, "--checkpoint"), args.vocab)
    scorer = None
    if meta.get("selector") == "maxworth":
        scorer = pipeline.scorer_from_meta(meta, {"cache_path": args.cache, "model_path": args.scorer_model})
    result = pipeline.predict_article(model, vocab, meta, args.headline, args.body, scorer)
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


def cmd_ablate(args) -> int:
    cfg = _pipeline_config(args, train=args.train, test=args.test, out_dir=args.out)
    train = ingest_jsonl(_require_file(cfg.train, "training corpus (--train or config 'train')"))
    test = ingest_jsonl(_require_file(cfg.test, "test corpus (--test or config 'test')"))
    scorer = make_scorer(cfg.scorer_config()) if args.axis == "selector" or cfg.selector == "maxworth" else None
    rows = pipeline.run_ablation(cfg, args.axis, train, test, cfg.out_dir, scorer)
    sys.stdout.write(pipeline.format_table(rows) + "\n")
    return 0


def cmd_train_scorer(args) -> int:
    examples = read_training_tsv(_require_file(args.data, "--data"))
    model = train_local_scorer(examples, epochs=args.epochs, lr=args.lr, top_k=args.top_k, l2=args.l2)
    model.save(args.out)
    log.info("trained sentence scorer on %d sentences -> %s", len(examples), args.out)
    return 0


def cmd_build_vocab(args) -> int:
    records = ingest_jsonl(_require_file(args.in_path, "--in"))
    vocab = build_vocab([t for r in records for t in (r.headline, r.body)], max_words=args.max_words)
    vocab.save(args.out)
    log.info("wrote %d tokens to %s", len(vocab), args.out)
    return 0


# -- parser ------------------------------------------------------------------


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append ``(default: ...)`` unless the help text already states one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default is argparse.SUPPRESS or not action.option_strings or action.required:
            return text
        if action.default is None:
            return text + " (default: unset)"
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(prog="dualnews", description=__doc__.splitlines()[0], formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="read a FakeNewsNet tree or JSONL into corpus JSONL", formatter_class=fmt)
    s.add_argument("--root", help="FakeNewsNet root (<source>/<label>/<story>/<content file>)")
    s.add_argument("--jsonl", help="existing corpus JSONL to validate and normalize")
    s.add_argument("--out", required=True, help="output corpus JSONL")
    s.add_argument("--stats-out", help="write per-source/label counts as JSON")
    s.add_argument("--content-name", default="news content.json", help="content file name inside each story dir")
    s.add_argument("--workers", type=int, default=1, help="reader threads")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="stratified train/test split", formatter_class=fmt)
    s.add_argument("--in", dest="in_path", required=True, help="corpus JSONL")
    s.add_argument("--train-out", required=True, help="train JSONL")
    s.add_argument("--test-out", required=True, help="test JSONL")
    s.add_argument("--fraction", type=float, default=0.8, help="train fraction")
    s.add_argument("--seed", type=int, default=42, help="shuffle seed")
    s.add_argument("--no-stratify", action="store_true", help="split without per-label grouping")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("select-span", help="choose the body span fed to the body encoder", formatter_class=fmt)
    s.add_argument("--in", dest="in_path", required=True, help="corpus JSONL")
    s.add_argument("--out", required=True, help="corpus JSONL with span fields added")
    s.add_argument("--method", choices=("maxworth", "tfidf", "head"), default="maxworth", help="selector")
    s.add_argument("--budget", type=int, default=512,
                   help="encoder input length; spans get budget-2 wordpieces ([CLS] and [SEP] reserved)")
    s.add_argument("--vocab", help="WordPiece vocab for token counts (default: built from the input corpus)")
    s.add_argument("--scorer", choices=("local", "remote"), default="local", help="sentence scorer backend")
    s.add_argument("--cache", help="JSONL score cache shared across runs")
    s.add_argument("--endpoint", help="remote scorer URL prefix; the quoted sentence is appended")
    s.add_argument("--scorer-model", help="local scorer model JSON (default: untrained, uniform scores)")
    s.add_argument("--max-in-flight", type=int, default=1, help="concurrent remote requests")
    s.add_argument("--min-interval", type=float, default=0.0, help="seconds between remote requests")
    s.set_defaults(func=cmd_select_span)

    def add_config_flags(s):
        s.add_argument("--config", help="JSON config; flags override its values")
        s.add_argument("--preset", choices=("toy", "base"), default=None, help="model preset (default: toy, or the config value)")
        s.add_argument("--variant", choices=("dual", "single"), default=None, help="model variant (default: dual)")
        s.add_argument("--selector", choices=("maxworth", "tfidf", "head"), default=None,
                       help="span selector for records without spans (default: maxworth)")
        s.add_argument("--vocab", help="vocab file (default: built from the training corpus)")
        s.add_argument("--lr", type=float, default=None, help="learning rate (preset default)")
        s.add_argument("--epochs", type=int, default=None, help="epochs (preset default)")
        s.add_argument("--seed", type=int, default=None, help="seed (default: 42)")
        s.add_argument("--post-ln", action="store_true", help="post-LN layout (needed for imported BERT weights)")
        s.add_argument("--tied", action="store_true", help="share weights between the two encoders")

    s = sub.add_parser("train", help="train a classifier", formatter_class=fmt)
    add_config_flags(s)
    s.add_argument("--train", help="training corpus JSONL (config key 'train')")
    s.add_argument("--val-fraction", type=float, default=None, help="held-out validation fraction (default: 0)")
    s.add_argument("--out-dir", default=None, help="checkpoint directory (config key 'out_dir', default runs/default)")
    s.add_argument("--init-weights", help="checkpoint whose tensors seed the model (names must match)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a test corpus and write metrics", formatter_class=fmt)
    s.add_argument("--checkpoint", required=True, help="model checkpoint (.mwpb)")
    s.add_argument("--test", required=True, help="test corpus JSONL")
    s.add_argument("--report-out", help="metrics JSON (default: stdout)")
    s.add_argument("--roc-out", help="ROC curve CSV")
    s.add_argument("--vocab", help="vocab file (default: the one recorded in the checkpoint)")
    s.add_argument("--threshold", type=float, default=0.5, help="p_fake decision threshold")
    s.add_argument("--name", help="model name in the report (default: variant)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="classify one article", formatter_class=fmt)
    s.add_argument("--checkpoint", required=True, help="model checkpoint (.mwpb)")
    s.add_argument("--headline", required=True, help="headline text")
    s.add_argument("--body", required=True, help="body text")
    s.add_argument("--vocab", help="vocab file (default: the one recorded in the checkpoint)")
    s.add_argument("--cache", help="score cache override for maxworth checkpoints")
    s.add_argument("--scorer-model", help="local scorer model override for maxworth checkpoints")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("ablate", help="train and evaluate one ablation grid", formatter_class=fmt)
    s.add_argument("--axis", choices=("parallel", "selector", "input-size"), required=True, help="ablation axis")
    add_config_flags(s)
    s.add_argument("--train", help="training corpus JSONL (config key 'train')")
    s.add_argument("--test", help="test corpus JSONL (config key 'test')")
    s.add_argument("--out", default=None, help="output directory (config key 'out_dir')")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("train-scorer", help="fit the local sentence scorer on a labelled TSV", formatter_class=fmt)
    s.add_argument("--data", required=True, help="TSV of <NFS|UFS|CFS>\\t<sentence>")
    s.add_argument("--out", required=True, help="model JSON")
    s.add_argument("--epochs", type=int, default=200, help="gradient steps")
    s.add_argument("--lr", type=float, default=0.5, help="step size")
    s.add_argument("--top-k", type=int, default=1000, help="bag-of-words vocabulary size")
    s.add_argument("--l2", type=float, default=0.0, help="L2 penalty")
    s.set_defaults(func=cmd_train_scorer)

    s = sub.add_parser("build-vocab", help="write a WordPiece vocab built from a corpus", formatter_class=fmt)
    s.add_argument("--in", dest="in_path", required=True, help="corpus JSONL")
    s.add_argument("--out", required=True, help="vocab file, one token per line")
    s.add_argument("--max-words", type=int, default=5000, help="whole-word entries beyond characters")
    s.set_defaults(func=cmd_build_vocab)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, ConfigError, CorpusError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScoringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.failed:
            print(f"failed sentences: {len(exc.failed)}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
