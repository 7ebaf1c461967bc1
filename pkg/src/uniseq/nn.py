"""Causal transformer building blocks, loss, optimizer and LR schedule.

Everything runs on the `autograd.Tensor` engine in 64-bit floats. Blocks
are pre-norm; the nonlinearity is the smooth GELU. An `AttentionCounter`
can be attached to record the exact number of attention score entries
materialized per layer, which the benchmark harness compares against
closed-form complexity expressions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    Tensor,
    assert_finite,
    gelu,
    masked_softmax,
    normalize_last,
    softmax_cross_entropy,
)

__all__ = [
    "AttentionCounter",
    "AttentionParams",
    "init_stack",
    "causal_self_attention",
    "transformer_stack",
    "cross_entropy",
    "lr_schedule",
    "OptimizerState",
    "optimizer_step",
    "grad_check",
    "parameter_count",
    "save_checkpoint",
    "load_checkpoint",
]


class AttentionCounter:
    """Counts attention score-matrix entries (rows x cols per call)."""

    def __init__(self):
        self.pairs = 0

    def reset(self):
        self.pairs = 0


@dataclass
class AttentionParams:
    """One causal self-attention layer: projections plus head count."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    @property
    def width(self) -> int:
        return self.wq.shape[0]


@dataclass
class Block:
    attn: AttentionParams
    ln1_g: Tensor
    ln1_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln2_g: Tensor
    ln2_b: Tensor


@dataclass
class Stack:
    blocks: list[Block]
    lnf_g: Tensor
    lnf_b: Tensor
    counter: AttentionCounter | None = field(default=None, repr=False)


def _init_mat(rng: np.random.Generator, nin: int, nout: int) -> Tensor:
    return Tensor(rng.normal(0.0, 1.0 / np.sqrt(nin), size=(nin, nout)))


def init_stack(rng: np.random.Generator, width: int, heads: int, layers: int,
               ff: int | None = None) -> Stack:
    if width % heads != 0:
        raise ValueError(f"width {width} not divisible by heads {heads}")
    ff = 4 * width if ff is None else ff
    blocks = []
    for _ in range(layers):
        blocks.append(Block(
            attn=AttentionParams(
                wq=_init_mat(rng, width, width),
                wk=_init_mat(rng, width, width),
                wv=_init_mat(rng, width, width),
                wo=_init_mat(rng, width, width),
                heads=heads,
            ),
            ln1_g=Tensor(np.ones(width)),
            ln1_b=Tensor(np.zeros(width)),
            w1=_init_mat(rng, width, ff),
            b1=Tensor(np.zeros(ff)),
            w2=_init_mat(rng, ff, width),
            b2=Tensor(np.zeros(width)),
            ln2_g=Tensor(np.ones(width)),
            ln2_b=Tensor(np.zeros(width)),
        ))
    return Stack(blocks=blocks, lnf_g=Tensor(np.ones(width)), lnf_b=Tensor(np.zeros(width)))


def causal_self_attention(x: Tensor, params: AttentionParams,
                          counter: AttentionCounter | None = None) -> Tensor:
    """Multi-head causal self-attention on (..., T, D) input.

    Position i attends to positions <= i only; masked entries receive
    -inf scores, so outputs at i are bit-identical under any change at
    positions > i.
    """
    d = params.width
    h = params.heads
    if x.shape[-1] != d:
        raise ValueError(f"input width {x.shape[-1]} != params width {d}")
    assert_finite(x, "attention input")
    t = x.shape[-2]
    lead = x.shape[:-2]
    dh = d // h

    q = (x @ params.wq).reshape(*lead, t, h, dh).swapaxes(-2, -3)
    k = (x @ params.wk).reshape(*lead, t, h, dh).swapaxes(-2, -3)
    v = (x @ params.wv).reshape(*lead, t, h, dh).swapaxes(-2, -3)

    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    mask = np.triu(np.full((t, t), -np.inf), k=1)
    scores = scores + Tensor(mask, requires_grad=False)
    if counter is not None:
        batch = int(np.prod(lead)) if lead else 1
        counter.pairs += batch * t * t
    att = masked_softmax(scores)
    out = (att @ v).swapaxes(-2, -3).reshape(*lead, t, d)
    return out @ params.wo


def transformer_stack(x: Tensor, stack: Stack) -> Tensor:
    """Pre-norm causal transformer over (..., T, D)."""
    for blk in stack.blocks:
        h = normalize_last(x) * blk.ln1_g + blk.ln1_b
        x = x + causal_self_attention(h, blk.attn, stack.counter)
        h = normalize_last(x) * blk.ln2_g + blk.ln2_b
        x = x + (gelu(h @ blk.w1 + blk.b1) @ blk.w2 + blk.b2)
    return normalize_last(x) * stack.lnf_g + stack.lnf_b


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean NLL over masked-in positions; see softmax_cross_entropy."""
    targets = np.asarray(targets)
    if mask is None:
        mask = np.ones(targets.shape, dtype=bool)
    return softmax_cross_entropy(logits, targets, mask)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def lr_schedule(step: int, peak: float, warmup: int) -> float:
    """Noam-style rate normalized so the apex equals `peak` at `warmup`."""
    if step < 1 or warmup < 1:
        raise ValueError("step and warmup must be >= 1")
    return peak * min(step / warmup, np.sqrt(warmup / step))


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-9
    peak_lr: float = 1e-3
    warmup: int = 100

    @classmethod
    def for_params(cls, params: dict, **kw) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            **kw,
        )


def optimizer_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """Bias-corrected Adam update in place, rate from lr_schedule."""
    state.step += 1
    lr = lr_schedule(state.step, state.peak_lr, state.warmup)
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        assert_finite(g, f"gradient of {name}")
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        mhat = state.m[name] / (1 - b1**state.step)
        vhat = state.v[name] / (1 - b2**state.step)
        p.data -= lr * mhat / (np.sqrt(vhat) + state.eps)


# ---------------------------------------------------------------------------
# Parameter utilities
# ---------------------------------------------------------------------------

def _walk(obj, prefix=""):
    """Yield (name, Tensor) pairs from nested dicts/dataclasses/lists."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif isinstance(obj, dict):
        for k, v in obj.items():
            yield from _walk(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _walk(v, f"{prefix}.{i}")
    elif hasattr(obj, "__dataclass_fields__"):
        for k in obj.__dataclass_fields__:
            if k == "counter":
                continue
            yield from _walk(getattr(obj, k), f"{prefix}.{k}" if prefix else k)


def flatten_params(obj) -> dict:
    return dict(_walk(obj))


def parameter_count(obj) -> int:
    return sum(t.data.size for _, t in _walk(obj))


def zero_grads(obj) -> None:
    for _, t in _walk(obj):
        t.grad = None


def collect_grads(params: dict) -> dict:
    return {k: p.grad for k, p in params.items() if p.grad is not None}


def grad_check(fn, params: dict, epsilon: float = 1e-5) -> float:
    """Max relative error of reverse-mode grads vs central differences.

    `fn(params) -> Tensor` must be a scalar. epsilon is the finite
    difference half-step.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon outside [1e-7, 1e-3]")
    for p in params.values():
        p.grad = None
    out = fn(params)
    out.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    # near-zero components are compared at the overall gradient scale so
    # finite-difference noise on them does not register as error
    gscale = max(1.0, max(np.abs(g).max() for g in analytic.values()))
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = fn(params).item()
            flat[i] = orig - epsilon
            lo = fn(params).item()
            flat[i] = orig
            num = (hi - lo) / (2 * epsilon)
            if not np.isfinite(ga[i]):
                raise FloatingPointError(f"non-finite gradient in {name}")
            denom = max(abs(ga[i]), abs(num), 1e-6 * gscale)
            worst = max(worst, abs(ga[i] - num) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint format: magic "UAW1", u32 count, then per entry
# u32 name-length + utf8 name, u32 ndim, ndim x u32 dims, f64-LE data.
# ---------------------------------------------------------------------------

_MAGIC = b"UAW1"


def save_checkpoint(path, params) -> None:
    entries = flatten_params(params) if not isinstance(params, dict) else params
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(entries)))
        for name, t in entries.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", t.data.ndim))
            for d in t.data.shape:
                f.write(struct.pack("<I", d))
            f.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a UAW1 checkpoint")
        (count,) = struct.unpack("<I", f.read(4))
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = Tensor(data.copy())
    return out


def load_into(params, saved: dict) -> None:
    """Copy checkpoint arrays into an existing parameter structure."""
    live = flatten_params(params)
    for name, t in live.items():
        if name not in saved:
            raise KeyError(f"checkpoint missing parameter {name}")
        if saved[name].data.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name}")
        t.data[...] = saved[name].data
