"""Sentence segmentation, WordPiece tokenization and fixed-length encoding."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)

TERMINATORS = ".!?\n"
ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "no", "vs",
        "etc", "inc", "ltd", "co", "corp", "gen", "gov", "sen", "rep", "rev",
        "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
        "nov", "dec", "u.s", "u.k", "e.g", "i.e", "a.m", "p.m",
    }
)
MAX_CHARS_PER_WORD = 100


@dataclass(frozen=True)
class Sentence:
    text: str
    char_start: int
    token_len: int


class Vocab:
    """Token <-> id map loaded from a one-token-per-line file."""

    def __init__(self, tokens: Sequence[str], lowercase: bool = True):
        tokens = list(tokens)
        if not tokens or tokens[0] != PAD:
            raise ValueError("vocab must start with [PAD] at id 0")
        index: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise ValueError(f"duplicate vocab token {tok!r} at lines {index[tok]} and {i}")
            index[tok] = i
        missing = [t for t in SPECIAL_TOKENS if t not in index]
        if missing:
            raise ValueError(f"vocab is missing special tokens: {missing}")
        self.tokens = tokens
        self.index = index
        self.lowercase = lowercase

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def cls_id(self) -> int:
        return self.index[CLS]

    @property
    def sep_id(self) -> int:
        return self.index[SEP]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @classmethod
    def load(cls, path: str | Path, lowercase: bool = True) -> "Vocab":
        text = Path(path).read_text(encoding="utf-8")
        tokens = text.split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        return cls([t.rstrip("\r") for t in tokens], lowercase=lowercase)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")


def build_vocab(texts: Iterable[str], max_words: int = 5000, min_freq: int = 1) -> Vocab:
    """Whole-word vocabulary plus single-character pieces so every
    alphanumeric word has a decomposition.  Ordering is deterministic."""
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for text in texts:
        for word in basic_tokenize(text):
            counts[word] += 1
            chars.update(word)
    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for ch in sorted(chars):
        for piece in (ch, "##" + ch):
            if piece not in seen:
                tokens.append(piece)
                seen.add(piece)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    added = 0
    for word, freq in ranked:
        if added >= max_words or freq < min_freq:
            break
        if word not in seen:
            tokens.append(word)
            seen.add(word)
            added += 1
    return Vocab(tokens)


def segment_sentences(text: str, vocab: Vocab | None = None) -> list[Sentence]:
    """Rule-based splitter.

    A sentence ends at a run of ``.!?`` or a newline.  A period does not end
    a sentence when the word before it is a known abbreviation, or when it
    is immediately followed by an alphanumeric character (decimals, "U.S").
    ``token_len`` counts WordPiece tokens when a vocab is given, else basic
    tokens.
    """
    out: list[Sentence] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in TERMINATORS:
            if ch == "." and _period_continues(text, i):
                i += 1
                continue
            j = i + 1
            while j < n and text[j] in ".!?" and ch != "\n":
                j += 1
            _emit(text, start, j, vocab, out)
            start = j
            i = j
            continue
        i += 1
    _emit(text, start, n, vocab, out)
    return out


def _period_continues(text: str, i: int) -> bool:
    if i + 1 < len(text) and text[i + 1].isalnum():
        return True
    j = i
    while j > 0 and (text[j - 1].isalpha() or text[j - 1] == "."):
        j -= 1
    word = text[j:i].lower()
    return word in ABBREVIATIONS


def _emit(text: str, start: int, end: int, vocab: Vocab | None, out: list[Sentence]) -> None:
    segment = text[start:end]
    stripped = segment.strip()
    if not stripped:
        return
    offset = start + (len(segment) - len(segment.lstrip()))
    if vocab is None:
        n_tok = len(basic_tokenize(stripped, lowercase=False))
    else:
        n_tok = len(wordpiece(stripped, vocab))
    out.append(Sentence(stripped, offset, max(n_tok, 1)))


def _is_punct(ch: str) -> bool:
    return not ch.isalnum() and not ch.isspace()


def clean_text(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    out = []
    for ch in text:
        if ch.isspace():
            out.append(" ")
        elif unicodedata.category(ch).startswith("C") or ch == "�":
            continue
        else:
            out.append(ch)
    return "".join(out)


def basic_tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace split, then every punctuation codepoint becomes its own token."""
    text = clean_text(text)
    if lowercase:
        text = text.lower()
    tokens: list[str] = []
    for chunk in text.split():
        word = []
        for ch in chunk:
            if _is_punct(ch):
                if word:
                    tokens.append("".join(word))
                    word = []
                tokens.append(ch)
            else:
                word.append(ch)
        if word:
            tokens.append("".join(word))
    return tokens


def wordpiece_word(word: str, vocab: Vocab) -> list[str]:
    if len(word) > MAX_CHARS_PER_WORD:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = "##" + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


def wordpiece(text: str, vocab: Vocab) -> list[str]:
    pieces: list[str] = []
    for word in basic_tokenize(text, lowercase=vocab.lowercase):
        pieces.extend(wordpiece_word(word, vocab))
    return pieces


@dataclass(frozen=True)
class TokenSeq:
    ids: np.ndarray
    attention_mask: np.ndarray
    real_len: int
    segment_ids: np.ndarray | None = None

    @property
    def max_len(self) -> int:
        return int(self.ids.shape[0])


def _pack(ids: list[int], max_len: int, vocab: Vocab, segments: list[int] | None = None) -> TokenSeq:
    real = len(ids)
    arr = np.full(max_len, vocab.pad_id, dtype=np.int64)
    arr[:real] = ids
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:real] = 1
    seg = None
    if segments is not None:
        seg = np.zeros(max_len, dtype=np.int64)
        seg[:real] = segments
    return TokenSeq(arr, mask, real, seg)


def encode(text: str, vocab: Vocab, max_len: int) -> TokenSeq:
    if max_len < 3:
        raise ValueError(f"max_len must be >= 3, got {max_len}")
    pieces = wordpiece(text, vocab)[: max_len - 2]
    ids = [vocab.cls_id] + [vocab.id(p) for p in pieces] + [vocab.sep_id]
    return _pack(ids, max_len, vocab)


def encode_pair(a: str, b: str, vocab: Vocab, max_len: int) -> TokenSeq:
    """[CLS] a [SEP] b [SEP]; ``b`` is cut first, then ``a``."""
    if max_len < 4:
        raise ValueError(f"max_len must be >= 4 for pair encoding, got {max_len}")
    budget = max_len - 3
    pa = wordpiece(a, vocab)
    pb = wordpiece(b, vocab)
    pa = pa[:budget]
    pb = pb[: budget - len(pa)]
    ids = (
        [vocab.cls_id]
        + [vocab.id(p) for p in pa]
        + [vocab.sep_id]
        + [vocab.id(p) for p in pb]
        + [vocab.sep_id]
    )
    segments = [0] * (len(pa) + 2) + [1] * (len(pb) + 1)
    return _pack(ids, max_len, vocab, segments)


def stack(seqs: Sequence[TokenSeq], trim: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Batch equal-length sequences into (ids, mask, segment_ids).

    With ``trim`` the trailing columns that are padding in every row are
    dropped; attention masking makes them irrelevant to the output.
    """
    width = max(s.real_len for s in seqs) if trim else seqs[0].max_len
    ids = np.stack([s.ids[:width] for s in seqs])
    mask = np.stack([s.attention_mask[:width] for s in seqs])
    if all(s.segment_ids is not None for s in seqs):
        seg = np.stack([s.segment_ids[:width] for s in seqs])
    else:
        seg = None
    return ids, mask, seg
