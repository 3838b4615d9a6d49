"""Glue between the stages: select spans, encode, train, evaluate, predict."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint as ck
from .classifier import FAKE, Classifier, ModelConfig, init_model, predict_proba
from .config import PipelineConfig
from .corpus import NewsRecord, SplitSpec, split
from .evaluation import MetricsReport, RocPoint, build_report
from .scoring import Backend, CachedScorer, ScorerConfig, make_scorer
from .selection import SpanSelection, head_truncate, max_worth, tfidf_select
from .textprep import Vocab, build_vocab, encode, encode_pair, segment_sentences
from .training import Example, TrainConfig, make_batch, train, write_epoch_log

log = logging.getLogger(__name__)

LABEL_TO_CLASS = {"real": 0, "fake": FAKE}


def select_span(
    body: str,
    method: str,
    budget: int,
    vocab: Vocab,
    scorer: Backend | None = None,
) -> SpanSelection:
    """``budget`` is the wordpiece budget (encoder length minus 2)."""
    sentences = segment_sentences(body, vocab)
    if not sentences:
        return SpanSelection(0, 0, "", 0, None, (0,))
    if method == "head":
        return head_truncate(sentences, budget)
    if method == "tfidf":
        return tfidf_select(sentences, budget)
    if method == "maxworth":
        if scorer is None:
            raise ValueError("maxworth selection needs a sentence scorer")
        scores = scorer.score_texts([s.text for s in sentences])
        return max_worth(sentences, scores, budget)
    raise ValueError(f"unknown selection method {method!r}")


def select_corpus(
    records: Sequence[NewsRecord],
    method: str,
    budget: int,
    vocab: Vocab,
    scorer: Backend | None = None,
) -> list[NewsRecord]:
    out = []
    for rec in records:
        sel = select_span(rec.body, method, budget, vocab, scorer)
        out.append(
            dataclasses.replace(
                rec,
                span_text=sel.text,
                span_start=sel.start_sentence,
                span_end=sel.end_sentence,
                span_mean_score=sel.mean_score,
            )
        )
    return out


def ensure_spans(
    records: Sequence[NewsRecord],
    method: str,
    budget: int,
    vocab: Vocab,
    scorer_factory=None,
) -> list[NewsRecord]:
    """Select spans only for records that arrive without one."""
    todo = [r for r in records if r.span_text is None]
    if not todo:
        return list(records)
    scorer = scorer_factory() if method == "maxworth" and scorer_factory else None
    done = {r.id: r for r in select_corpus(todo, method, budget, vocab, scorer)}
    return [done.get(r.id, r) for r in records]


def encode_records(records: Sequence[NewsRecord], vocab: Vocab, config: ModelConfig) -> list[Example]:
    """Records without a selected span fall back to the raw body (truncated by the encoder)."""
    examples = []
    for rec in records:
        body = rec.span_text if rec.span_text is not None else rec.body
        label = LABEL_TO_CLASS[rec.label]
        if config.variant == "single":
            examples.append(Example(label, pair=encode_pair(rec.headline, body, vocab, config.body_max),
                                    record_id=rec.id))
        else:
            examples.append(Example(
                label,
                headline=encode(rec.headline, vocab, config.headline_max),
                body=encode(body, vocab, config.body_max),
                record_id=rec.id,
            ))
    return examples


def p_fake(model: Classifier, examples: Sequence[Example], batch_size: int = 32) -> np.ndarray:
    out = []
    for i in range(0, len(examples), batch_size):
        logits, _ = model.logits(make_batch(examples[i : i + batch_size]))
        out.append(predict_proba(logits)[:, FAKE])
    return np.concatenate(out) if out else np.zeros(0)


def evaluate_model(model: Classifier, examples: Sequence[Example], name: str,
                   threshold: float = 0.5) -> tuple[MetricsReport, list[RocPoint]]:
    if not examples:
        raise ValueError("test set is empty")
    scores = p_fake(model, examples)
    return build_report(name, scores, [e.label for e in examples], threshold)


def load_or_build_vocab(cfg: PipelineConfig, records: Sequence[NewsRecord], out_dir: Path) -> tuple[Vocab, str]:
    if cfg.vocab:
        return Vocab.load(cfg.vocab), str(Path(cfg.vocab).resolve())
    texts = [t for r in records for t in (r.headline, r.body)]
    vocab = build_vocab(texts, max_words=cfg.vocab_max_words)
    path = out_dir / "vocab.txt"
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(path)
    return vocab, str(path.resolve())


def _dtype(cfg: PipelineConfig):
    return np.float32 if cfg.dtype == "float32" else np.float64


def new_model(cfg: PipelineConfig, vocab_size: int, **overrides) -> Classifier:
    mcfg = cfg.model_config(vocab_size, **overrides)
    params = init_model(mcfg, cfg.seed, _dtype(cfg), cfg.init_std)
    return Classifier(mcfg, params)


def make_checkpoint(model: Classifier, tcfg: TrainConfig | None, state, meta: dict) -> ck.Checkpoint:
    return ck.Checkpoint(model.params, model.config.to_dict(),
                         tcfg.to_dict() if tcfg else None, state, meta)


def carve_validation(records: Sequence[NewsRecord], fraction: float, seed: int):
    if fraction <= 0:
        return list(records), []
    return split(records, SplitSpec(1.0 - fraction, seed, True))


def run_training(
    cfg: PipelineConfig,
    train_records: Sequence[NewsRecord],
    out_dir: str | Path,
    vocab: Vocab | None = None,
    vocab_path: str | None = None,
    init_weights_path: str | None = None,
    **model_overrides,
) -> dict:
    """Train one model and write ``checkpoint-init.mwpb``, one checkpoint per
    epoch, ``checkpoint-best.mwpb`` (when validating) and ``epochs.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if vocab is None:
        vocab, vocab_path = load_or_build_vocab(cfg, train_records, out)
    model = new_model(cfg, len(vocab), **model_overrides)
    if init_weights_path:
        ck.import_weights(init_weights_path, model.params)
    tcfg = cfg.train_config()
    fit_records, val_records = carve_validation(train_records, cfg.val_fraction, cfg.seed)
    train_set = encode_records(fit_records, vocab, model.config)
    val_set = encode_records(val_records, vocab, model.config)
    meta = {
        # relative to the checkpoint directory so run outputs are relocatable
        "vocab_path": os.path.relpath(vocab_path, out) if vocab_path else None,
        "vocab_size": len(vocab),
        "selector": cfg.selector,
        "budget": cfg.budget or model.config.body_max,
        "scorer": cfg.scorer_config().__dict__,
        "labels": ["real", "fake"],
    }
    ck.save_checkpoint(out / "checkpoint-init.mwpb", make_checkpoint(model, tcfg, None, meta))

    def on_epoch(entry, m, state):
        ck.save_checkpoint(out / f"checkpoint-epoch{entry['epoch']}.mwpb",
                           make_checkpoint(m, tcfg, state, dict(meta, epoch=entry["epoch"])))
        if entry.get("best"):
            ck.save_checkpoint(out / "checkpoint-best.mwpb",
                               make_checkpoint(m, tcfg, state, dict(meta, epoch=entry["epoch"])))

    result = train(model, train_set, tcfg, val_set or None, callbacks=[on_epoch])
    write_epoch_log(out / "epochs.jsonl", result.log)
    last = result.log[-1]["epoch"]
    ck.save_checkpoint(out / "checkpoint-last.mwpb",
                       make_checkpoint(model, tcfg, result.state, dict(meta, epoch=last)))
    return {"model": model, "vocab": vocab, "log": result.log, "out_dir": str(out),
            "best_epoch": result.best_epoch}


def load_model(path: str | Path, vocab_path: str | None = None) -> tuple[Classifier, Vocab, dict]:
    ckpt = ck.load_checkpoint(path)
    if ckpt.model_config is None:
        raise ck.CheckpointError(f"{path} has no model config")
    mcfg = ModelConfig.from_dict(ckpt.model_config)
    vpath = vocab_path
    if vpath is None and ckpt.meta.get("vocab_path"):
        vpath = Path(path).parent / ckpt.meta["vocab_path"]
    if not vpath:
        raise ck.CheckpointError("no vocab path in checkpoint; pass one explicitly")
    vocab = Vocab.load(vpath)
    if len(vocab) != mcfg.encoder.vocab_size:
        raise ck.CheckpointError(
            f"vocab {vpath} has {len(vocab)} tokens but the checkpoint embeds {mcfg.encoder.vocab_size}"
        )
    return Classifier(mcfg, ckpt.params), vocab, ckpt.meta


def scorer_from_meta(meta: dict, overrides: dict | None = None) -> CachedScorer:
    data = dict(meta.get("scorer") or {})
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_scorer(ScorerConfig(**data))


def predict_article(model: Classifier, vocab: Vocab, meta: dict, headline: str, body: str,
                    scorer: Backend | None = None) -> dict:
    budget = int(meta.get("budget") or model.config.body_max) - 2
    method = meta.get("selector", "head")
    if method == "maxworth" and scorer is None:
        scorer = scorer_from_meta(meta)
    sel = select_span(body, method, budget, vocab, scorer)
    rec = NewsRecord("predict", "other", headline, body, "real", span_text=sel.text)
    ex = encode_records([rec], vocab, model.config)
    prob = float(p_fake(model, ex)[0])
    return {"p_fake": prob, "span_text": sel.text}


def run_ablation(
    cfg: PipelineConfig,
    axis: str,
    train_records: Sequence[NewsRecord],
    test_records: Sequence[NewsRecord],
    out_dir: str | Path,
    scorer: Backend | None = None,
) -> list[dict]:
    """Train and evaluate each variant of one ablation axis.

    parallel   dual vs single encoder, same spans
    selector   maxworth vs tfidf vs head truncation, dual model
    input-size single encoder with body length from ``cfg.ablation_sizes``
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab, vocab_path = load_or_build_vocab(cfg, train_records, out)
    budget = cfg.selection_budget

    def spans(method, b=budget):
        if method == "maxworth" and scorer is None:
            raise ValueError("maxworth ablation needs a scorer")
        return (select_corpus(train_records, method, b, vocab, scorer),
                select_corpus(test_records, method, b, vocab, scorer))

    cells: list[tuple[str, dict, str]] = []
    if axis == "parallel":
        cells = [("dual", {"variant": "dual"}, cfg.selector), ("single", {"variant": "single"}, cfg.selector)]
    elif axis == "selector":
        cells = [(m, {"variant": "dual"}, m) for m in ("maxworth", "tfidf", "head")]
    elif axis == "input-size":
        cells = [(f"single-{n}", {"variant": "single", "body_max": n}, cfg.selector)
                 for n in cfg.ablation_sizes]
    else:
        raise ValueError(f"unknown ablation axis {axis!r}")

    rows = []
    span_cache: dict[tuple[str, int], tuple] = {}
    for name, overrides, method in cells:
        b = overrides.get("body_max", cfg.budget or cfg.body_max) - 2
        key = (method, b)
        if key not in span_cache:
            span_cache[key] = spans(method, b)
        tr, te = span_cache[key]
        run = run_training(cfg, tr, out / name, vocab=vocab, vocab_path=vocab_path, **overrides)
        model = run["model"]
        report, _ = evaluate_model(model, encode_records(te, vocab, model.config), name)
        row = report.to_dict()
        row.update({"axis": axis, "variant": name, "selector": method,
                    "body_max": model.config.body_max, "model_variant": model.config.variant})
        rows.append(row)
    (out / "ablation.json").write_text(json.dumps({"axis": axis, "rows": rows}, indent=2) + "\n")
    return rows


def format_table(rows: Sequence[dict]) -> str:
    header = "| Model | Accuracy | Precision | Recall | F1 | AUC |"
    lines = [header, "|---|---|---|---|---|---|"]
    for r in rows:
        auc = "n/a" if r["auc"] is None else f"{r['auc']:.3f}"
        lines.append(f"| {r['variant']} | {r['accuracy']:.3f} | {r['precision']:.3f} | "
                     f"{r['recall']:.3f} | {r['f1']:.3f} | {auc} |")
    return "\n".join(lines)
