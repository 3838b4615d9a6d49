"""Sentence check-worthiness scoring.

Two backends produce P(CFS | sentence):

* ``LocalScorer``: multinomial logistic regression over a small set of
  handcrafted features plus top-K unigram indicators.
* ``RemoteScorer``: HTTP GET against a claim-spotting endpoint returning
  ``{"results": [{"text": ..., "score": ...}]}``.

``CachedScorer`` wraps either one with a persistent JSONL cache keyed by
the SHA-256 of the NFC-normalised sentence.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence
from urllib.parse import quote

import httpx
import numpy as np

from .textprep import Sentence

log = logging.getLogger(__name__)

CLASSES = ("NFS", "UFS", "CFS")
CFS = 2
N_HANDCRAFTED = 8
HANDCRAFTED_NAMES = (
    "token_count",
    "digit_tokens",
    "mid_capitalized",
    "comparative_superlative",
    "first_second_person",
    "question",
    "past_tense",
    "mean_word_length",
)
PRONOUNS = frozenset(
    "i me my mine myself we us our ours ourselves you your yours yourself yourselves".split()
)
API_KEY_ENV = "DUALNEWS_SCORER_API_KEY"
API_KEY_HEADER_ENV = "DUALNEWS_SCORER_API_KEY_HEADER"

_WORD = re.compile(r"[A-Za-z0-9][A-Za-z0-9'\-]*")


class ScoringError(RuntimeError):
    def __init__(self, message: str, failed: Sequence[str] = ()):
        super().__init__(message)
        self.failed = list(failed)


def cache_key(sentence: str) -> str:
    return hashlib.sha256(unicodedata.normalize("NFC", sentence).encode("utf-8")).hexdigest()


def _words(sentence: str) -> list[str]:
    return _WORD.findall(sentence)


def handcrafted_features(sentence: str) -> np.ndarray:
    words = _words(sentence)
    lower = [w.lower() for w in words]
    feats = np.zeros(N_HANDCRAFTED)
    if not words:
        return feats
    feats[0] = len(words)
    feats[1] = sum(any(c.isdigit() for c in w) for w in words)
    feats[2] = sum(w[0].isupper() for w in words[1:])
    feats[3] = sum(
        (w.endswith("er") and len(w) >= 5) or (w.endswith("est") and len(w) >= 6) for w in lower
    )
    feats[4] = sum(w in PRONOUNS for w in lower)
    feats[5] = 1.0 if "?" in sentence else 0.0
    feats[6] = sum(w.endswith("ed") and len(w) >= 4 for w in lower)
    feats[7] = sum(len(w) for w in words) / len(words)
    return feats


@dataclass
class LocalScorerModel:
    """Weights are (3, n_features) in class order NFS, UFS, CFS.

    ``scale`` divides raw features before the linear map; training sets it
    to the per-feature max magnitude so gradient descent is well conditioned.
    """

    vocabulary: list[str]
    weights: np.ndarray
    bias: np.ndarray
    scale: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = N_HANDCRAFTED + len(self.vocabulary)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.scale is None:
            self.scale = np.ones(n)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.weights.shape != (3, n) or self.bias.shape != (3,) or self.scale.shape != (n,):
            raise ValueError(
                f"scorer model shapes inconsistent: weights {self.weights.shape}, "
                f"bias {self.bias.shape}, scale {self.scale.shape}, features {n}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("scorer model has non-finite weights")
        self._index = {w: i for i, w in enumerate(self.vocabulary)}

    @classmethod
    def zeros(cls, vocabulary: Sequence[str] = ()) -> "LocalScorerModel":
        n = N_HANDCRAFTED + len(vocabulary)
        return cls(list(vocabulary), np.zeros((3, n)), np.zeros(3))

    @property
    def n_features(self) -> int:
        return N_HANDCRAFTED + len(self.vocabulary)

    def featurize(self, sentence: str) -> np.ndarray:
        vec = np.zeros(self.n_features)
        vec[:N_HANDCRAFTED] = handcrafted_features(sentence)
        for w in set(w.lower() for w in _words(sentence)):
            j = self._index.get(w)
            if j is not None:
                vec[N_HANDCRAFTED + j] = 1.0
        return vec

    def class_probabilities(self, sentence: str) -> np.ndarray:
        x = self.featurize(sentence) / self.scale
        z = self.weights @ x + self.bias
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def to_json(self) -> dict:
        return {
            "classes": list(CLASSES),
            "vocabulary": self.vocabulary,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LocalScorerModel":
        if data.get("classes", list(CLASSES)) != list(CLASSES):
            raise ValueError(f"unexpected class order {data.get('classes')}")
        return cls(data["vocabulary"], data["weights"], data["bias"], data.get("scale"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LocalScorerModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def local_featurize(sentence: str, vocabulary: Sequence[str] = ()) -> np.ndarray:
    return LocalScorerModel.zeros(vocabulary).featurize(sentence)


def local_score(model: LocalScorerModel, sentence: str) -> float:
    return float(model.class_probabilities(sentence)[CFS])


def read_training_tsv(path: str | Path) -> list[tuple[str, str]]:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        label, sep, sentence = line.partition("\t")
        if not sep or label not in CLASSES:
            raise ValueError(f"{path}:{lineno}: expected 'NFS|UFS|CFS<TAB>sentence'")
        examples.append((sentence, label))
    return examples


def train_local_scorer(
    examples: Sequence[tuple[str, str]],
    epochs: int = 200,
    lr: float = 0.5,
    top_k: int = 1000,
    l2: float = 0.0,
    loss_log: list[float] | None = None,
) -> LocalScorerModel:
    """Full-batch gradient descent on mean 3-class cross-entropy.

    Starts from zero weights, so the result depends only on the data and
    its order.  ``loss_log`` (if given) receives the loss before each step.
    """
    if not examples:
        raise ValueError("train_local_scorer needs at least one example")
    counts: Counter[str] = Counter()
    for sentence, _ in examples:
        counts.update(set(w.lower() for w in _words(sentence)))
    vocab = [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]]
    model = LocalScorerModel.zeros(vocab)
    X = np.stack([model.featurize(s) for s, _ in examples])
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    model.scale = scale
    X = X / scale
    y = np.array([CLASSES.index(label) for _, label in examples])
    onehot = np.eye(3)[y]
    n = len(examples)
    W, b = model.weights, model.bias
    for _ in range(epochs):
        z = X @ W.T + b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        if loss_log is not None:
            loss_log.append(float(-np.log(p[np.arange(n), y]).mean()))
        g = (p - onehot) / n
        W -= lr * (g.T @ X + l2 * W)
        b -= lr * g.sum(axis=0)
    return model


class Backend(Protocol):
    def score_texts(self, texts: Sequence[str]) -> list[float]: ...


class LocalScorer:
    def __init__(self, model: LocalScorerModel | None = None):
        self.model = model or LocalScorerModel.zeros()
        self.calls = 0

    def score_texts(self, texts: Sequence[str]) -> list[float]:
        self.calls += len(texts)
        return [local_score(self.model, t) for t in texts]


class RemoteScorer:
    """One GET per sentence: ``endpoint + url-quoted(sentence)``.

    Retries with exponential backoff on transport errors and 429/5xx.
    Requests are spaced by at least ``min_request_interval`` seconds and at
    most ``max_in_flight`` run concurrently.
    """

    RETRY_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_retries: int = 3,
        min_request_interval: float = 0.0,
        max_in_flight: int = 1,
        backoff_base: float = 0.5,
        api_key: str | None = None,
        api_key_header: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        if not endpoint:
            raise ValueError("remote scorer requires an endpoint")
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.min_request_interval = min_request_interval
        self.max_in_flight = max(1, max_in_flight)
        self.backoff_base = backoff_base
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        header = api_key_header or os.environ.get(API_KEY_HEADER_ENV, "x-api-key")
        headers = {header: api_key} if api_key else {}
        kwargs = {"timeout": timeout, "headers": headers}
        if transport is not None:
            kwargs["transport"] = transport
        self._http = httpx.Client(**kwargs)
        self._lock = threading.Lock()
        self._last = 0.0
        self.requests = 0

    def close(self) -> None:
        self._http.close()

    def _wait_turn(self) -> None:
        with self._lock:
            now = time.monotonic()
            delay = self._last + self.min_request_interval - now
            if delay > 0:
                time.sleep(delay)
            self._last = time.monotonic()
            self.requests += 1

    def _fetch(self, text: str) -> float:
        url = self.endpoint + quote(text, safe="")
        last_err: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            self._wait_turn()
            try:
                resp = self._http.get(url)
            except httpx.HTTPError as exc:
                last_err = exc
                continue
            if resp.status_code in self.RETRY_STATUS:
                last_err = ScoringError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ScoringError(f"HTTP {resp.status_code} for {text!r}", [text])
            results = resp.json().get("results") or []
            if not results:
                raise ScoringError(f"empty results for {text!r}", [text])
            score = float(results[0]["score"])
            return min(1.0, max(0.0, score))
        raise ScoringError(f"giving up on {text!r}: {last_err}", [text])

    def score_texts(self, texts: Sequence[str]) -> list[float]:
        results: list[float | None] = [None] * len(texts)
        failed: list[str] = []

        def one(i: int) -> None:
            try:
                results[i] = self._fetch(texts[i])
            except ScoringError:
                failed.append(texts[i])

        if self.max_in_flight == 1:
            for i in range(len(texts)):
                one(i)
        else:
            with ThreadPoolExecutor(self.max_in_flight) as pool:
                list(pool.map(one, range(len(texts))))
        if failed:
            raise ScoringError(f"{len(failed)} sentence(s) could not be scored", failed)
        return results  # type: ignore[return-value]


class ScoreCache:
    """Append-only JSONL of ``{"key": sha256, "score": float}``; last entry wins."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._scores: dict[str, float] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    self._scores[entry["key"]] = float(entry["score"])
                except (ValueError, KeyError, TypeError):
                    log.warning("skipping corrupt score cache line in %s", self.path)

    def __len__(self) -> int:
        return len(self._scores)

    def get(self, key: str) -> float | None:
        return self._scores.get(key)

    def put_many(self, items: dict[str, float]) -> None:
        with self._lock:
            self._scores.update(items)
            if self.path is None or not items:
                return
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    for key, score in items.items():
                        fh.write(json.dumps({"key": key, "score": score}) + "\n")
            except OSError as exc:
                log.warning("could not write score cache %s: %s", self.path, exc)


@dataclass(frozen=True)
class SentenceScore:
    sentence_index: int
    score: float


class CachedScorer:
    def __init__(self, backend: Backend, cache: ScoreCache | None = None):
        self.backend = backend
        self.cache = cache if cache is not None else ScoreCache()

    def score_texts(self, texts: Sequence[str]) -> list[float]:
        keys = [cache_key(t) for t in texts]
        missing: dict[str, str] = {}
        for key, text in zip(keys, texts):
            if self.cache.get(key) is None and key not in missing:
                missing[key] = text
        if missing:
            fresh = self.backend.score_texts(list(missing.values()))
            self.cache.put_many(dict(zip(missing.keys(), fresh)))
        return [self.cache.get(k) for k in keys]  # type: ignore[misc]


def score_sentences(scorer: Backend, sentences: Sequence[Sentence]) -> list[SentenceScore]:
    scores = scorer.score_texts([s.text for s in sentences])
    return [SentenceScore(i, float(s)) for i, s in enumerate(scores)]


@dataclass
class ScorerConfig:
    kind: str = "local"
    endpoint: str | None = None
    cache_path: str | None = None
    model_path: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    min_request_interval: float = 0.0
    max_in_flight: int = 1

    def validate(self) -> list[str]:
        errors = []
        if self.kind not in ("local", "remote"):
            errors.append(f"scorer kind must be local or remote, got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            errors.append("remote scorer requires an endpoint")
        return errors


def make_scorer(config: ScorerConfig, transport: httpx.BaseTransport | None = None) -> CachedScorer:
    errors = config.validate()
    if errors:
        raise ValueError("; ".join(errors))
    if config.kind == "remote":
        backend: Backend = RemoteScorer(
            config.endpoint or "",
            timeout=config.timeout,
            max_retries=config.max_retries,
            min_request_interval=config.min_request_interval,
            max_in_flight=config.max_in_flight,
            transport=transport,
        )
    else:
        model = LocalScorerModel.load(config.model_path) if config.model_path else None
        backend = LocalScorer(model)
    return CachedScorer(backend, ScoreCache(config.cache_path))


__all__ = [
    "CLASSES",
    "CachedScorer",
    "LocalScorer",
    "LocalScorerModel",
    "RemoteScorer",
    "ScoreCache",
    "ScorerConfig",
    "ScoringError",
    "SentenceScore",
    "cache_key",
    "handcrafted_features",
    "local_featurize",
    "local_score",
    "make_scorer",
    "read_training_tsv",
    "score_sentences",
    "train_local_scorer",
]
