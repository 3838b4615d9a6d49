"""Binary classification metrics with ``fake`` as the positive class."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _positive(labels) -> np.ndarray:
    """Accepts 1/0, True/False or the strings fake/real."""
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in ("fake", "real"):
                raise ValueError(f"unknown label {lab!r}")
            out.append(lab == "fake")
        else:
            out.append(bool(lab))
    return np.array(out, dtype=bool)


def confusion(scores: Sequence[float], labels, threshold: float = 0.5) -> ConfusionCounts:
    """Predict fake iff p_fake >= threshold."""
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    pred = np.asarray(scores, dtype=np.float64) >= threshold
    pos = _positive(labels)
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def metrics(c: ConfusionCounts) -> dict:
    """Accuracy, precision, recall and F1.  Undefined ratios are 0 and
    flagged with ``degenerate``."""
    if c.total <= 0:
        raise ValueError("metrics need at least one evaluated record")
    degenerate = False
    accuracy = (c.tp + c.tn) / c.total
    if c.tp + c.fp:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1,
            "degenerate": degenerate}


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float


def roc(scores: Sequence[float], labels) -> list[RocPoint]:
    """One point per distinct score (descending), preceded by a +inf
    threshold at (0, 0).  The lowest threshold always reaches (1, 1)."""
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive(labels)
    if len(s) != len(pos):
        raise ValueError(f"{len(s)} scores for {len(pos)} labels")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="stable")
    s_sorted, pos_sorted = s[order], pos[order]
    tps = np.cumsum(pos_sorted)
    fps = np.cumsum(~pos_sorted)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    curve = [RocPoint(math.inf, 0.0, 0.0)]
    for i in ends:
        curve.append(RocPoint(float(s_sorted[i]), fps[i] / n_neg, tps[i] / n_pos))
    return curve


def auc(curve: Sequence[RocPoint]) -> float:
    """Trapezoidal area under the curve."""
    area = 0.0
    for a, b in zip(curve, curve[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return area


def auc_pairwise(scores: Sequence[float], labels) -> float:
    """Fraction of (positive, negative) pairs ranked correctly; ties count half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive(labels)
    sp, sn = s[pos], s[~pos]
    if len(sp) == 0 or len(sn) == 0:
        raise ValueError("AUC needs both positive and negative labels")
    wins = 0.0
    for v in sp:
        wins += np.sum(v > sn) + 0.5 * np.sum(v == sn)
    return float(wins / (len(sp) * len(sn)))


@dataclass
class MetricsReport:
    model: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    counts: ConfusionCounts
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = asdict(self.counts)
        return d


def build_report(model: str, p_fake: Sequence[float], labels, threshold: float = 0.5):
    counts = confusion(p_fake, labels, threshold)
    m = metrics(counts)
    pos = _positive(labels)
    if pos.all() or not pos.any():
        curve, area = [], None
        m["degenerate"] = True
    else:
        curve = roc(p_fake, labels)
        area = auc(curve)
    report = MetricsReport(model, m["accuracy"], m["precision"], m["recall"], m["f1"], area,
                           counts, m["degenerate"])
    return report, curve


def write_report(path: str | Path, report: MetricsReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_roc_csv(path: str | Path, curve: Sequence[RocPoint]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for pt in curve:
            w.writerow([repr(pt.threshold) if math.isfinite(pt.threshold) else "inf",
                        repr(float(pt.fpr)), repr(float(pt.tpr))])
