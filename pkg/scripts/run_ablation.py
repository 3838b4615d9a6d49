"""Run one or all ablation axes on a corpus JSONL.

    python3 scripts/run_ablation.py --corpus corpus.jsonl --out runs/ablation \
        [--axis parallel|selector|input-size|all] [--config cfg.json]

The corpus is split 80/20 (seed 42) once; every axis trains on the same
split.  Without --corpus a 400-article synthetic corpus is generated.
"""

import argparse
import logging
from pathlib import Path

from dualnews.config import PipelineConfig
from dualnews.corpus import SplitSpec, ingest_jsonl, split
from dualnews.pipeline import format_table, run_ablation
from dualnews.scoring import make_scorer
from dualnews.synthetic import make_separable_corpus

AXES = ("parallel", "selector", "input-size")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--corpus", default="synthetic", help="corpus JSONL, or 'synthetic' for a generated one")
    ap.add_argument("--out", default="runs/ablation", help="output directory")
    ap.add_argument("--axis", default="all", choices=AXES + ("all",), help="ablation axis")
    ap.add_argument("--config", default="", help="pipeline config JSON; empty means the toy preset")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    records = ingest_jsonl(args.corpus) if args.corpus != "synthetic" else make_separable_corpus(400, seed=0)
    train, test = split(records, SplitSpec(0.8, 42))
    cfg = PipelineConfig.load(args.config)
    scorer = make_scorer(cfg.scorer_config())
    for axis in AXES if args.axis == "all" else (args.axis,):
        rows = run_ablation(cfg, axis, train, test, Path(args.out) / axis, scorer)
        print(f"\n{axis}\n{format_table(rows)}")


if __name__ == "__main__":
    main()
