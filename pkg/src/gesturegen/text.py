"""Word-timing alignment: every gesture frame receives the embedding of the
word covering it, a zero padding vector when no word does, or a
deterministic hash-derived vector for out-of-vocabulary words."""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError

EMBED_DIM = 300


@dataclass
class WordTiming:
    word: str
    start: float
    end: float

    def __post_init__(self):
        if not (0.0 <= self.start < self.end):
            raise DataError(f"bad word timing [{self.start}, {self.end}) for '{self.word}'")


def load_transcript(path):
    """Tab-separated 'start end word' lines, seconds; sorted by start."""
    words = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 'start\\tend\\tword', got {len(parts)} fields", lineno)
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError(f"non-numeric timing in {parts[:2]}", lineno) from None
            words.append(WordTiming(parts[2], start, end))
    return sorted(words, key=lambda w: w.start)


def load_word_vectors(path, dim=EMBED_DIM):
    """Plain-text vectors: 'token v1 ... v{dim}' per line, counts header optional."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue  # "count dim" header
            if len(parts) < 2:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected {dim} values for '{parts[0]}', got {len(parts) - 1}", lineno)
            try:
                table[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise ParseError(f"non-numeric vector entry for '{parts[0]}'", lineno) from None
    return table


def hash_fallback_vector(word, dim=EMBED_DIM):
    """Deterministic stand-in embedding for out-of-vocabulary words."""
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(seed).normal(scale=0.3, size=dim)


def align_text(words, table, t_frames, fps=30.0, dim=EMBED_DIM):
    """T x dim matrix: frame t (time t / fps) takes the embedding of the word
    whose [start, end) covers it; uncovered frames stay zero."""
    if t_frames < 1:
        raise DataError("align_text needs at least one frame")
    ordered = sorted(words, key=lambda w: w.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise DataError(f"overlapping words '{prev.word}' and '{cur.word}'")
    out = np.zeros((t_frames, dim))
    for w in ordered:
        lo = int(np.ceil(w.start * fps - 1e-9))
        hi = min(int(np.ceil(w.end * fps - 1e-9)), t_frames)
        if lo >= hi:
            continue
        vec = table.get(w.word)
        if vec is None:
            vec = hash_fallback_vector(w.word, dim)
        out[lo:hi] = vec
    return out
