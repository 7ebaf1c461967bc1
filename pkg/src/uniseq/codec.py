"""Residual vector quantization codec with a deterministic transform front end.

The analysis/synthesis pair is a seeded orthogonal framing transform
(hop of S samples per frame, latent dim L <= S); with L == S the pair is
exactly invertible. Quantization is textbook residual VQ: level k stores
the index of the codebook vector closest (L2) to the residual left by
levels < k, and decoding sums the selected vectors. Codebooks are
learned by per-level k-means on residuals.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioSignal",
    "CodecConfig",
    "CodebookSet",
    "analyze",
    "synthesize",
    "rvq_encode",
    "rvq_decode",
    "train_codebooks",
    "flatten",
    "unflatten",
    "token_rate",
    "read_wav",
    "write_wav",
    "save_grid",
    "load_grid",
    "save_codebooks",
    "load_codebooks",
]


@dataclass
class AudioSignal:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("signal must be a non-empty 1-D array")
        if np.abs(self.samples).max() > 1.0 + 1e-12:
            raise ValueError("samples must lie in [-1, 1]")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class CodecConfig:
    hop: int = 320          # S: samples per frame
    latent_dim: int = 320   # L
    n_q: int = 3
    codebook_size: int = 1024  # V per level
    transform_seed: int = 0

    def __post_init__(self):
        if self.hop < 1 or self.latent_dim < 1 or self.n_q < 1 or self.codebook_size < 2:
            raise ValueError("invalid codec configuration")
        if self.latent_dim > self.hop:
            raise ValueError("latent_dim must not exceed hop")


@dataclass
class CodebookSet:
    vectors: np.ndarray  # (n_q, V, L)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3:
            raise ValueError("codebooks must be (n_q, V, L)")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("codebook vectors must be finite")

    @property
    def n_q(self) -> int:
        return self.vectors.shape[0]

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.vectors.shape[2]


def _transform(config: CodecConfig) -> np.ndarray:
    """Seeded orthogonal S x S matrix; analysis keeps the first L rows."""
    rng = np.random.default_rng(config.transform_seed)
    a = rng.normal(size=(config.hop, config.hop))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix the sign convention for determinism
    return q[: config.latent_dim]


def analyze(signal: AudioSignal, config: CodecConfig) -> np.ndarray:
    """Frame the signal (floor semantics, tail dropped) and project each
    S-sample window to an L-dim latent via the orthonormal transform."""
    x = signal.samples
    s = config.hop
    if x.size < s:
        raise ValueError(f"signal shorter than one hop ({x.size} < {s})")
    t = x.size // s
    frames = x[: t * s].reshape(t, s)
    return frames @ _transform(config).T


def synthesize(frames: np.ndarray, config: CodecConfig, sample_rate: int = 16000) -> AudioSignal:
    """Transpose of the analysis projection; T frames -> T*S samples."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != config.latent_dim:
        raise ValueError("frames shape inconsistent with config")
    x = (frames @ _transform(config)).reshape(-1)
    return AudioSignal(np.clip(x, -1.0, 1.0), sample_rate)


def rvq_encode(frames: np.ndarray, books: CodebookSet) -> np.ndarray:
    """T x n_q grid of code indices; ties broken toward the lowest index."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != books.latent_dim:
        raise ValueError("frame dimension does not match codebooks")
    residual = frames.copy()
    grid = np.empty((frames.shape[0], books.n_q), dtype=np.int64)
    for k in range(books.n_q):
        book = books.vectors[k]
        # squared distances; argmin picks the first (lowest) index on ties
        d2 = (residual * residual).sum(1)[:, None] - 2 * residual @ book.T + (book * book).sum(1)[None]
        idx = np.argmin(d2, axis=1)
        grid[:, k] = idx
        residual -= book[idx]
    return grid


def rvq_decode(grid: np.ndarray, books: CodebookSet) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[1] != books.n_q:
        raise ValueError("grid shape does not match codebooks")
    if grid.min() < 0 or grid.max() >= books.size:
        raise ValueError("code index out of range")
    out = np.zeros((grid.shape[0], books.latent_dim))
    for k in range(books.n_q):
        out += books.vectors[k][grid[:, k]]
    return out


def _kmeans(data: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Plain Lloyd k-means; empty clusters re-seeded from the farthest point."""
    n = data.shape[0]
    centroids = data[rng.choice(n, size=k, replace=False)].copy()
    for _ in range(iters):
        d2 = (data * data).sum(1)[:, None] - 2 * data @ centroids.T + (centroids * centroids).sum(1)[None]
        assign = np.argmin(d2, axis=1)
        dist = d2[np.arange(n), assign]
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = data[members].mean(axis=0)
            else:
                far = int(np.argmax(dist))
                centroids[j] = data[far]
                dist[far] = 0.0
    return centroids


def train_codebooks(frames: np.ndarray, config: CodecConfig, iters: int = 25,
                    seed: int = 0) -> CodebookSet:
    """Per-level k-means on the residuals left by the shallower levels."""
    frames = np.asarray(frames, dtype=np.float64)
    v = config.codebook_size
    if frames.shape[0] < v:
        raise ValueError(f"corpus of {frames.shape[0]} frames < codebook size {v}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    residual = frames.copy()
    books = np.empty((config.n_q, v, frames.shape[1]))
    for k in range(config.n_q):
        books[k] = _kmeans(residual, v, iters, rng)
        d2 = ((residual * residual).sum(1)[:, None] - 2 * residual @ books[k].T
              + (books[k] * books[k]).sum(1)[None])
        idx = np.argmin(d2, axis=1)
        residual = residual - books[k][idx]
    return CodebookSet(books)


def flatten(grid: np.ndarray) -> np.ndarray:
    """Frame-major flattening: [z_1^1..z_1^nq, z_2^1, ...]."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("grid must be T x n_q")
    return grid.reshape(-1)


def unflatten(seq: np.ndarray, n_q: int) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.ndim != 1 or seq.size % n_q != 0:
        raise ValueError(f"sequence length {seq.size} not divisible by n_q={n_q}")
    return seq.reshape(-1, n_q)


def token_rate(config: CodecConfig, sample_rate: int) -> tuple[float, float]:
    """(frames/second, tokens/second) = (f_s/S, f_s/S * n_q)."""
    fps = sample_rate / config.hop
    return fps, fps * config.n_q


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def read_wav(path) -> AudioSignal:
    """16-bit PCM mono little-endian WAV; anything else is rejected."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        if w.getcomptype() != "NONE":
            raise ValueError(f"{path}: compressed WAV not supported")
        raw = w.readframes(w.getnframes())
        rate = w.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, rate)


def write_wav(path, signal: AudioSignal) -> None:
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(pcm.tobytes())


_GRID_MAGIC = b"UAG1"
_BOOK_MAGIC = b"UAC1"


def save_grid(path, grid: np.ndarray) -> None:
    grid = np.asarray(grid)
    t, n_q = grid.shape
    with open(path, "wb") as f:
        f.write(_GRID_MAGIC)
        f.write(struct.pack("<II", n_q, t))
        f.write(grid.astype("<u4").tobytes())


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _GRID_MAGIC:
            raise ValueError(f"{path}: not a UAG1 token grid")
        n_q, t = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(4 * n_q * t), dtype="<u4")
        if data.size != n_q * t:
            raise ValueError(f"{path}: truncated token grid")
    return data.reshape(t, n_q).astype(np.int64)


def save_codebooks(path, books: CodebookSet) -> None:
    with open(path, "wb") as f:
        f.write(_BOOK_MAGIC)
        f.write(struct.pack("<III", books.n_q, books.size, books.latent_dim))
        f.write(books.vectors.astype("<f8").tobytes())


def load_codebooks(path) -> CodebookSet:
    with open(path, "rb") as f:
        if f.read(4) != _BOOK_MAGIC:
            raise ValueError(f"{path}: not a UAC1 codebook file")
        n_q, v, latent = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(8 * n_q * v * latent), dtype="<f8")
        if data.size != n_q * v * latent:
            raise ValueError(f"{path}: truncated codebook file")
    return CodebookSet(data.reshape(n_q, v, latent).copy())
