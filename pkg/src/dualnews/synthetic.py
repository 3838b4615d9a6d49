"""Generated corpora for smoke tests and desk-scale experiments."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import NewsRecord

FAKE_MARKER = "zorblat"
REAL_MARKER = "quintor"

_FILLER = (
    "the council city report said officials week market local residents plan "
    "budget school road project team season film star show family health data "
    "study year group public water energy court police state county board new "
    "after before during while about around under over near across through"
).split()


def _sentence(rng: np.random.Generator, lo: int = 5, hi: int = 10) -> list[str]:
    n = int(rng.integers(lo, hi + 1))
    return [str(w) for w in rng.choice(_FILLER, size=n)]


def make_separable_corpus(n: int = 400, seed: int = 0, source: str = "other") -> list[NewsRecord]:
    """Balanced fake/real articles; the label is given away by one marker
    token placed in either the headline or the body (chosen at random)."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = "fake" if i % 2 == 0 else "real"
        marker = FAKE_MARKER if label == "fake" else REAL_MARKER
        headline = _sentence(rng, 4, 7)
        body = [_sentence(rng) for _ in range(int(rng.integers(2, 5)))]
        if rng.random() < 0.5:
            headline.insert(int(rng.integers(0, len(headline) + 1)), marker)
        else:
            s = body[int(rng.integers(0, len(body)))]
            s.insert(int(rng.integers(0, len(s) + 1)), marker)
        records.append(NewsRecord(
            id=f"syn-{i:05d}",
            source=source,
            headline=" ".join(headline).capitalize(),
            body=" ".join(" ".join(s).capitalize() + "." for s in body),
            label=label,
        ))
    return records


def write_fakenewsnet_tree(root: str | Path, per_cell: int = 2, seed: int = 0) -> None:
    """FakeNewsNet-layout tree: ``<source>/<label>/<story>/news content.json``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    k = 0
    for source in ("politifact", "gossipcop"):
        for label in ("fake", "real"):
            for j in range(per_cell):
                story = f"{source}{1000 + k}"
                k += 1
                d = root / source / label / story
                d.mkdir(parents=True, exist_ok=True)
                content = {
                    "url": f"https://example.org/{story}",
                    "title": " ".join(_sentence(rng, 4, 6)).capitalize(),
                    "text": " ".join(" ".join(_sentence(rng)).capitalize() + "." for _ in range(3)),
                    "authors": [],
                }
                (d / "news content.json").write_text(json.dumps(content, indent=1), encoding="utf-8")
