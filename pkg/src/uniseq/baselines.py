"""Runnable single-stack models for the prediction-order baselines.

Each baseline wraps the shared causal transformer: flattening and
coarse-first reorder the grid into one token stream; parallel and delay
run one step per emission step with n_q output heads, head k scoring the
level-k cell co-emitted at that step. Delay padding slots carry the
empty token and are excluded from the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .autograd import Tensor, concat, softmax_cross_entropy, take
from .nn import Stack, transformer_stack
from .taskformat import SPECIAL

__all__ = ["BaselineModel", "make_baseline", "baseline_loss", "baseline_train_step"]

_START = SPECIAL["<start>"]
_EMPTY = SPECIAL["<empty>"]


@dataclass
class BaselineModel:
    arch: str            # flatten | coarse_first | parallel | delay
    n_q: int
    vocab_size: int
    codebook_size: int
    audio_offset: int
    emb: Tensor          # (V, D)
    pos: Tensor          # (max_len, D)
    stack: Stack
    head_w: list[Tensor]  # one (D, V) head per co-emitted level
    head_b: list[Tensor]

    def global_ids(self, grid: np.ndarray) -> np.ndarray:
        """Map (T, n_q) local codes to level-major joint vocabulary ids."""
        t, n_q = grid.shape
        levels = np.arange(n_q)[None, :]
        return self.audio_offset + levels * self.codebook_size + grid


def make_baseline(arch: str, n_q: int, vocab_size: int, codebook_size: int,
                  audio_offset: int, width: int, heads: int, layers: int,
                  max_len: int, ff: int | None = None,
                  seed: int = 0) -> BaselineModel:
    if arch not in ("flatten", "coarse_first", "parallel", "delay"):
        raise ValueError(f"unknown baseline arch {arch!r}")
    rng = np.random.default_rng(seed)
    n_heads = 1 if arch in ("flatten", "coarse_first") else n_q
    return BaselineModel(
        arch=arch,
        n_q=n_q,
        vocab_size=vocab_size,
        codebook_size=codebook_size,
        audio_offset=audio_offset,
        emb=Tensor(rng.normal(0.0, 0.02, size=(vocab_size, width))),
        pos=Tensor(rng.normal(0.0, 0.02, size=(max_len, width))),
        stack=nn.init_stack(rng, width, heads, layers, ff),
        head_w=[Tensor(rng.normal(0.0, 1.0 / np.sqrt(width),
                                  size=(width, vocab_size)))
                for _ in range(n_heads)],
        head_b=[Tensor(np.zeros(vocab_size)) for _ in range(n_heads)],
    )


def _run_stack(model: BaselineModel, inputs: np.ndarray) -> Tensor:
    x = take(model.emb, inputs)
    if inputs.ndim == 2:  # (L, n_q) summed slot embeddings per step
        x = x.sum(axis=1)
    x = x + model.pos[: x.shape[0]]
    return transformer_stack(x.reshape(1, *x.shape), model.stack).reshape(*x.shape)


def _head_logits(model: BaselineModel, y: Tensor) -> Tensor:
    """(L, n_heads, V) logits from the per-level output heads."""
    cols = [(y @ w + b).reshape(y.shape[0], 1, model.vocab_size)
            for w, b in zip(model.head_w, model.head_b)]
    return concat(cols, axis=1)


def baseline_loss(model: BaselineModel, grid: np.ndarray) -> Tensor:
    """Teacher-forced mean NLL of one grid under the baseline's layout."""
    grid = np.asarray(grid)
    t, n_q = grid.shape
    if n_q != model.n_q:
        raise ValueError("grid n_q does not match model")
    ids = model.global_ids(grid)

    if model.arch in ("flatten", "coarse_first"):
        seq = ids.reshape(-1) if model.arch == "flatten" else ids.T.reshape(-1)
        inputs = np.concatenate([[_START], seq[:-1]])
        y = _run_stack(model, inputs)
        logits = y @ model.head_w[0] + model.head_b[0]
        return softmax_cross_entropy(logits, seq, np.ones(seq.size, dtype=bool))

    if model.arch == "parallel":
        # step f consumes frame f-1 (a start row at f=0) and co-emits frame f
        slots = np.vstack([np.full((1, n_q), _START), ids[:-1]])
        y = _run_stack(model, slots)
        logits = _head_logits(model, y)
        return softmax_cross_entropy(logits, ids, np.ones_like(ids, dtype=bool))

    # delay: slot (s, k) holds cell (s - k + 1, k) or the empty token
    n_steps = t + n_q - 1
    slots = np.full((n_steps + 1, n_q), _EMPTY)
    slots[0] = _START
    target = np.full((n_steps, n_q), _EMPTY)
    mask = np.zeros((n_steps, n_q), dtype=bool)
    for s in range(1, n_steps + 1):
        for k in range(n_q):
            f = s - k - 1
            if 0 <= f < t:
                slots[s, k] = ids[f, k]
                target[s - 1, k] = ids[f, k]
                mask[s - 1, k] = True
    y = _run_stack(model, slots[:-1])
    logits = _head_logits(model, y)
    return softmax_cross_entropy(logits, target, mask)


def baseline_train_step(model: BaselineModel, grid: np.ndarray,
                        state: nn.OptimizerState) -> float:
    flat = nn.flatten_params(model)
    for p in flat.values():
        p.grad = None
    loss = baseline_loss(model, grid)
    loss.backward()
    nn.optimizer_step(flat, nn.collect_grads(flat), state)
    return loss.item()
