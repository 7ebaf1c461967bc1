"""Non-audio condition tokenizers.

Deterministic desk-scale stand-ins for the upstream models a full system
would use: phoneme sequences with optional per-symbol durations, MIDI
note events flattened to a frame-level F0 stream, k-means semantic
tokens, and seeded hash-based word embeddings in place of a pretrained
text encoder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhonemeSeq",
    "MidiSeq",
    "expand_phoneme_durations",
    "strip_durations",
    "flatten_midi",
    "semantic_tokenize",
    "embed_text",
    "read_event_file",
]


@dataclass
class PhonemeSeq:
    symbols: list[int]
    durations: list[int] | None = None

    def __post_init__(self):
        if self.durations is not None:
            if len(self.durations) != len(self.symbols):
                raise ValueError("durations must align one-to-one with symbols")
            if any(d < 1 for d in self.durations):
                raise ValueError("durations must be >= 1")


@dataclass
class MidiSeq:
    notes: list[tuple[int, int]]  # (f0 token id, duration in frames)

    def __post_init__(self):
        if any(d < 1 for _, d in self.notes):
            raise ValueError("note durations must be >= 1")


def expand_phoneme_durations(p: PhonemeSeq) -> list[int]:
    """Repeat each symbol by its duration; output length = sum of durations."""
    if p.durations is None:
        raise ValueError("phoneme sequence carries no durations")
    out: list[int] = []
    for sym, dur in zip(p.symbols, p.durations):
        out.extend([sym] * dur)
    return out


def strip_durations(p: PhonemeSeq) -> PhonemeSeq:
    return PhonemeSeq(list(p.symbols), None)


def flatten_midi(m: MidiSeq) -> list[int]:
    """Frame-level F0 stream: each note's F0 token repeated its duration."""
    out: list[int] = []
    for f0, dur in m.notes:
        out.extend([f0] * dur)
    return out


def semantic_tokenize(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per frame (L2, ties to lowest index)."""
    features = np.asarray(features, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if features.ndim != 2 or centroids.ndim != 2 or features.shape[1] != centroids.shape[1]:
        raise ValueError("feature/centroid dimension mismatch")
    d2 = ((features * features).sum(1)[:, None] - 2 * features @ centroids.T
          + (centroids * centroids).sum(1)[None])
    return np.argmin(d2, axis=1)


def embed_text(words: list[str], dim: int, seed: int = 0) -> np.ndarray:
    """One unit-norm vector per word, derived from a seeded hash.

    The same (word, dim, seed) always maps to the same vector, so
    repeated runs and repeated words are consistent.
    """
    if dim < 1:
        raise ValueError("embedding dim must be >= 1")
    out = np.empty((len(words), dim))
    for i, word in enumerate(words):
        if not word:
            raise ValueError("empty word in text input")
        digest = hashlib.sha256(f"{seed}:{word}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.normal(size=dim)
        out[i] = v / np.linalg.norm(v)
    return out


def read_event_file(path) -> list[tuple[int, int]]:
    """Parse "SYMBOL DURATION" lines (ASCII integers, one event per line)."""
    events = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'SYMBOL DURATION'")
            try:
                sym, dur = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field") from exc
            events.append((sym, dur))
    return events
