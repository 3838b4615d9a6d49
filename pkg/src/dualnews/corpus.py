"""Article ingestion, JSONL round-tripping and train/test splitting."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

SOURCES = ("politifact", "gossipcop", "other")
LABEL_NAMES = ("fake", "real")
CONTENT_NAME = "news content.json"
SPAN_FIELDS = ("span_text", "span_start", "span_end", "span_mean_score")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class NewsRecord:
    id: str
    source: str
    headline: str
    body: str
    label: str
    span_text: str | None = None
    span_start: int | None = None
    span_end: int | None = None
    span_mean_score: float | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be nonempty")
        if self.label not in LABEL_NAMES:
            raise CorpusError(f"record {self.id}: unknown label {self.label!r}")
        if self.source not in SOURCES:
            raise CorpusError(f"record {self.id}: unknown source {self.source!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.span_text is None:
            for k in SPAN_FIELDS:
                d.pop(k)
        return d


@dataclass
class IngestResult:
    records: list[NewsRecord]
    dropped: int = 0
    malformed: int = 0
    malformed_paths: list[str] = field(default_factory=list)


def _read_story(path: Path, source: str, label: str, story: str):
    try:
        content = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError):
        return "malformed", None
    if not isinstance(content, dict):
        return "malformed", None
    text = content.get("text")
    title = content.get("title")
    if not isinstance(text, str) or not text.strip():
        return "dropped", None
    if not isinstance(title, str):
        title = ""
    return "ok", NewsRecord(f"{source}-{story}", source, title.strip(), text.strip(), label)


def scan_fakenewsnet(root: str | Path, content_name: str = CONTENT_NAME, workers: int = 1) -> IngestResult:
    """Read ``<root>/<source>/<label>/<story_id>/<content_name>``.

    Unknown source directory names map to ``other``; label directories other
    than fake/real are ignored.  Output is sorted by id.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"FakeNewsNet root {root} does not exist")
    jobs = []
    for source_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        source = source_dir.name if source_dir.name in SOURCES else "other"
        for label in LABEL_NAMES:
            label_dir = source_dir / label
            if not label_dir.is_dir():
                continue
            for story_dir in sorted(p for p in label_dir.iterdir() if p.is_dir()):
                content = story_dir / content_name
                if content.is_file():
                    jobs.append((content, source, label, story_dir.name))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(lambda j: _read_story(*j), jobs))
    else:
        outcomes = [_read_story(*j) for j in jobs]
    result = IngestResult([])
    seen: set[str] = set()
    for job, (status, rec) in zip(jobs, outcomes):
        if status == "malformed":
            result.malformed += 1
            result.malformed_paths.append(str(job[0]))
            log.warning("skipping malformed content file %s", job[0])
        elif status == "dropped":
            result.dropped += 1
        else:
            if rec.id in seen:
                raise CorpusError(f"duplicate story id {rec.id}")
            seen.add(rec.id)
            result.records.append(rec)
    result.records.sort(key=lambda r: r.id)
    return result


def ingest_fakenewsnet(root: str | Path, content_name: str = CONTENT_NAME, workers: int = 1) -> list[NewsRecord]:
    return scan_fakenewsnet(root, content_name, workers).records


def record_from_dict(obj: dict, where: str = "") -> NewsRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}expected a JSON object")
    missing = [k for k in ("id", "source", "headline", "body", "label") if k not in obj]
    if missing:
        raise CorpusError(f"{where}missing keys {missing}")
    kwargs = {k: obj[k] for k in ("id", "source", "headline", "body", "label")}
    for k in SPAN_FIELDS:
        if obj.get(k) is not None:
            kwargs[k] = obj[k]
    try:
        return NewsRecord(**kwargs)
    except CorpusError as exc:
        raise CorpusError(f"{where}{exc}") from None


def ingest_jsonl(path: str | Path) -> list[NewsRecord]:
    records: list[NewsRecord] = []
    seen: dict[str, int] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}: "
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}malformed JSON ({exc.msg})") from None
            rec = record_from_dict(obj, where)
            if rec.id in seen:
                raise CorpusError(f"{where}duplicate id {rec.id!r} (first on line {seen[rec.id]})")
            seen[rec.id] = lineno
            records.append(rec)
    return records


def write_jsonl(path: str | Path, records: Iterable[NewsRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.8
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"split fraction must be in (0, 1), got {self.fraction}")


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def split(records: Sequence[NewsRecord], how: SplitSpec) -> tuple[list[NewsRecord], list[NewsRecord]]:
    """Seeded shuffle then cut; per label class when stratified.

    Input is canonicalised by id first, so caller order never matters.
    Both outputs are sorted by id.
    """
    if not records:
        raise ValueError("cannot split an empty corpus")
    ordered = sorted(records, key=lambda r: r.id)
    rng = np.random.default_rng(how.seed)
    groups = [[r for r in ordered if r.label == lab] for lab in LABEL_NAMES] if how.stratified else [ordered]
    train, test = [], []
    for group in groups:
        if not group:
            continue
        perm = rng.permutation(len(group))
        k = round_half_away(len(group) * how.fraction)
        train.extend(group[i] for i in perm[:k])
        test.extend(group[i] for i in perm[k:])
    train.sort(key=lambda r: r.id)
    test.sort(key=lambda r: r.id)
    return train, test


def stats(records: Iterable[NewsRecord], dropped: int | None = None) -> dict:
    """Counts per source and label, shaped ``{"politifact": {"fake": n, "real": n}, ...}``."""
    out: dict = {s: {lab: 0 for lab in LABEL_NAMES} for s in SOURCES}
    for r in records:
        out[r.source][r.label] += 1
    if dropped is not None:
        out["dropped"] = dropped
    return out


# Reference counts for the full public dataset.
REFERENCE_COUNTS = {"politifact": {"fake": 420, "real": 528}, "gossipcop": {"fake": 4974, "real": 16694}}


def stats_deltas(counts: dict) -> dict:
    return {
        src: {lab: counts[src][lab] - ref for lab, ref in labs.items()}
        for src, labs in REFERENCE_COUNTS.items()
    }
