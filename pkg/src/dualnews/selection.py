"""Choosing which part of an article body is fed to the body encoder."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .textprep import Sentence


@dataclass(frozen=True)
class SpanSelection:
    start_sentence: int
    end_sentence: int  # inclusive
    text: str
    token_len: int
    mean_score: float | None
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.indices:
            object.__setattr__(
                self, "indices", tuple(range(self.start_sentence, self.end_sentence + 1))
            )


def _join(sentences: Sequence[Sentence], idx: Sequence[int]) -> str:
    return " ".join(sentences[i].text for i in idx)


def max_worth(sentences: Sequence[Sentence], scores: Sequence[float], budget: int) -> SpanSelection:
    """Contiguous sentence window with the highest mean score.

    For every start position the candidate is the longest window whose
    summed ``token_len`` fits ``budget`` (a lone oversized sentence is its
    own candidate).  The start-0 candidate is always recorded; later
    candidates replace it only with a strictly greater mean, so ties go to
    the earliest start.
    """
    n = len(sentences)
    if n == 0:
        raise ValueError("max_worth needs at least one sentence")
    if len(scores) != n:
        raise ValueError(f"{len(scores)} scores for {n} sentences")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    lengths = [s.token_len for s in sentences]

    best = None
    best_mean = 0.0
    end = 0  # exclusive end of the current window
    total = 0
    for start in range(n):
        if end <= start:
            end, total = start, 0
        while end < n and total + lengths[end] <= budget:
            total += lengths[end]
            end += 1
        if end == start:
            # lone sentence over budget
            stop, window_len = start + 1, lengths[start]
        else:
            stop, window_len = end, total
        mean = math.fsum(scores[start:stop]) / (stop - start)
        if best is None or mean > best_mean:
            best, best_mean = (start, stop - 1, window_len), mean
        if end > start:
            total -= lengths[start]
    start, last, window_len = best
    idx = range(start, last + 1)
    return SpanSelection(start, last, _join(sentences, idx), window_len, best_mean)


def head_truncate(sentences: Sequence[Sentence], budget: int) -> SpanSelection:
    """Longest prefix of sentences within ``budget``; at least one sentence."""
    if not sentences:
        raise ValueError("head_truncate needs at least one sentence")
    total = sentences[0].token_len
    last = 0
    for i in range(1, len(sentences)):
        if total + sentences[i].token_len > budget:
            break
        total += sentences[i].token_len
        last = i
    return SpanSelection(0, last, _join(sentences, range(last + 1)), total, None)


_TERM = re.compile(r"\w+")


def _terms(text: str) -> list[str]:
    return _TERM.findall(text.lower())


def tfidf_weights(sentences: Sequence[Sentence]) -> list[float]:
    """Mean tf-idf over each sentence's distinct terms, using the document's
    own sentences as the collection: tf is the raw count in the sentence and
    idf = ln(n / (1 + df)) + 1."""
    n = len(sentences)
    term_lists = [_terms(s.text) for s in sentences]
    df: Counter[str] = Counter()
    for terms in term_lists:
        df.update(set(terms))
    weights = []
    for terms in term_lists:
        if not terms:
            weights.append(0.0)
            continue
        tf = Counter(terms)
        vals = [
            count * (math.log(n / (1 + df[t])) + 1.0) for t, count in sorted(tf.items())
        ]
        weights.append(math.fsum(vals) / len(vals))
    return weights


def tfidf_select(sentences: Sequence[Sentence], budget: int) -> SpanSelection:
    """Extractive summary: highest-weight sentences first (ties to the lower
    index) until the next one would overflow ``budget``.  The first pick is
    always taken.  Output keeps document order and need not be contiguous.
    """
    if not sentences:
        raise ValueError("tfidf_select needs at least one sentence")
    weights = tfidf_weights(sentences)
    order = sorted(range(len(sentences)), key=lambda i: (-weights[i], i))
    chosen = [order[0]]
    total = sentences[order[0]].token_len
    for i in order[1:]:
        if total + sentences[i].token_len > budget:
            break
        chosen.append(i)
        total += sentences[i].token_len
    chosen.sort()
    mean = math.fsum(weights[i] for i in chosen) / len(chosen)
    return SpanSelection(chosen[0], chosen[-1], _join(sentences, chosen), total, mean, tuple(chosen))
