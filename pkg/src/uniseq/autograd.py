"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every value is a `Tensor` wrapping a row-major ndarray. Building an
expression records a graph; `backward()` on a scalar walks it in reverse
topological order. All math stays in 64-bit floats so gradient checks
against central finite differences are meaningful.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "concat",
    "take",
    "masked_softmax",
    "softmax_cross_entropy",
    "normalize_last",
    "gelu",
    "assert_finite",
]


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "_backward", "_prev", "requires_grad", "name")

    def __init__(self, data, prev=(), requires_grad=True, name=""):
        self.data = _as_array(data)
        self.grad = None
        self._backward = None
        self._prev = tuple(prev)
        self.requires_grad = requires_grad
        self.name = name

    # ----- basic introspection -----
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # ----- arithmetic -----
    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, requires_grad=False)
        out = Tensor(self.data + other.data, (self, other))

        def _bw(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape))

        out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, requires_grad=False)
        out = Tensor(self.data - other.data, (self, other))

        def _bw(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape))

        out._backward = _bw
        return out

    def __rsub__(self, other):
        return Tensor(other, requires_grad=False) - self

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, requires_grad=False)
        out = Tensor(self.data * other.data, (self, other))
        a, b = self.data, other.data

        def _bw(g):
            return (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))

        out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, requires_grad=False)
        out = Tensor(self.data / other.data, (self, other))
        a, b = self.data, other.data

        def _bw(g):
            return (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            )

        out._backward = _bw
        return out

    def __pow__(self, p: float):
        out = Tensor(self.data**p, (self,))
        a = self.data
        out._backward = lambda g: (g * p * a ** (p - 1),)
        return out

    def matmul(self, other: "Tensor") -> "Tensor":
        out = Tensor(np.matmul(self.data, other.data), (self, other))
        a, b = self.data, other.data

        def _bw(g):
            ga = np.matmul(g, np.swapaxes(b, -1, -2))
            gb = np.matmul(np.swapaxes(a, -1, -2), g)
            return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

        out._backward = _bw
        return out

    __matmul__ = matmul

    # ----- shape ops -----
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = Tensor(self.data.reshape(shape), (self,))
        out._backward = lambda g: (g.reshape(old),)
        return out

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = Tensor(self.data.transpose(axes), (self,))
        out._backward = lambda g: (g.transpose(tuple(inv)),)
        return out

    def swapaxes(self, a, b):
        out = Tensor(np.swapaxes(self.data, a, b), (self,))
        out._backward = lambda g: (np.swapaxes(g, a, b),)
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))
        shape = self.data.shape

        def _bw(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        out._backward = _bw
        return out

    # ----- reductions -----
    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        shape = self.data.shape

        def _bw(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            ax = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, ax)
            return (np.broadcast_to(g, shape).copy(),)

        out._backward = _bw
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # ----- elementwise nonlinear -----
    def exp(self):
        out = Tensor(np.exp(self.data), (self,))
        y = out.data
        out._backward = lambda g: (g * y,)
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))
        a = self.data
        out._backward = lambda g: (g / a,)
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), (self,))
        y = out.data
        out._backward = lambda g: (g * (1.0 - y * y),)
        return out

    # ----- graph walk -----
    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for p, g in zip(node._prev, grads):
                if g is None or not p.requires_grad:
                    continue
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                p.grad += g


def tensor(data, requires_grad=True, name="") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g):
        return tuple(np.split(g, splits, axis=axis))

    out._backward = _bw
    return out


def take(table: Tensor, idx: np.ndarray) -> Tensor:
    """Embedding-style gather: out[..., :] = table[idx[...], :]."""
    idx = np.asarray(idx)
    out = Tensor(table.data[idx], (table,))
    shape = table.data.shape

    def _bw(g):
        full = np.zeros(shape)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, shape[-1]))
        return (full,)

    out._backward = _bw
    return out


def masked_softmax(scores: Tensor) -> Tensor:
    """Softmax along the last axis; -inf entries get probability exactly 0."""
    s = scores.data
    m = np.max(s, axis=-1, keepdims=True)
    e = np.exp(s - m)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, (scores,))

    def _bw(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    out._backward = _bw
    return out


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over masked-in positions.

    logits: (..., V); targets: integer array matching the leading shape;
    mask: boolean array matching targets. Raises if every position is
    masked out or a target falls outside the vocabulary.
    """
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=bool)
    v = logits.data.shape[-1]
    if targets.shape != logits.data.shape[:-1] or mask.shape != targets.shape:
        raise ValueError("targets/mask shape mismatch with logits")
    if not mask.any():
        raise ValueError("empty mask: no positions contribute to the loss")
    if targets[mask].min() < 0 or targets[mask].max() >= v:
        raise ValueError("target index out of vocabulary")

    flat = logits.data.reshape(-1, v)
    tflat = targets.reshape(-1)
    mflat = mask.reshape(-1)
    m = flat.max(axis=-1, keepdims=True)
    e = np.exp(flat - m)
    z = e.sum(axis=-1, keepdims=True)
    p = e / z
    nll = (np.log(z)[:, 0] + m[:, 0]) - flat[np.arange(flat.shape[0]), tflat]
    count = mflat.sum()
    loss = (nll * mflat).sum() / count
    out = Tensor(loss, (logits,))

    def _bw(g):
        grad = p.copy()
        grad[np.arange(flat.shape[0]), tflat] -= 1.0
        grad *= (mflat / count)[:, None]
        return ((g * grad).reshape(logits.data.shape),)

    out._backward = _bw
    return out


def normalize_last(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Zero-mean unit-variance normalization along the last axis."""
    a = x.data
    mu = a.mean(axis=-1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    out = Tensor(y, (x,))
    n = a.shape[-1]

    def _bw(g):
        gy = g * inv
        gvar = (g * xc).sum(axis=-1, keepdims=True) * (-0.5) * inv**3
        gmu = -gy.sum(axis=-1, keepdims=True) - gvar * 2.0 * xc.mean(axis=-1, keepdims=True)
        return (gy + gvar * 2.0 * xc / n + gmu / n,)

    out._backward = _bw
    return out


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """Smooth GELU (tanh form)."""
    a = x.data
    inner = _GELU_C * (a + 0.044715 * a**3)
    t = np.tanh(inner)
    y = 0.5 * a * (1.0 + t)
    out = Tensor(y, (x,))

    def _bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * a * a)
        dy = 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * dinner
        return (g * dy,)

    out._backward = _bw
    return out


def assert_finite(x, what: str = "value") -> None:
    a = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite {what} encountered")
