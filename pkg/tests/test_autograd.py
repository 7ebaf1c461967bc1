"""Tests for the reverse-mode autodiff engine."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uniseq.autograd import (
    Tensor,
    concat,
    gelu,
    masked_softmax,
    normalize_last,
    softmax_cross_entropy,
    take,
)


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, shape, seed=0, tol=1e-7):
    """Compare reverse-mode and numeric gradients of sum(build(x))."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    t = Tensor(x.copy())
    out = build(t).sum()
    out.backward()

    def scalar(a):
        return build(Tensor(a)).sum().item()

    num = numeric_grad(scalar, x.copy())
    assert np.allclose(t.grad, num, atol=tol, rtol=1e-5)


class TestElementwise:
    def test_add_mul_chain(self):
        check_op(lambda t: (t * 3.0 + 1.0) * t, (4, 5))

    def test_sub_div(self):
        check_op(lambda t: (t - 0.5) / (t * t + 2.0), (3, 3))

    def test_pow(self):
        check_op(lambda t: (t * t + 1.0) ** 1.5, (6,))

    def test_exp_log_tanh(self):
        check_op(lambda t: ((t * 0.3).exp() + 1.0).log() + t.tanh(), (2, 7))

    def test_gelu(self):
        check_op(lambda t: gelu(t), (5, 4))

    def test_broadcast_add(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4,)))
        (a + b).sum().backward()
        assert a.grad.shape == (3, 4)
        assert b.grad.shape == (4,)
        assert np.allclose(b.grad, 3.0)

    def test_broadcast_mul_grad(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(1, 3, 1))
        ta, tb = Tensor(a.copy()), Tensor(b.copy())
        (ta * tb).sum().backward()
        num = numeric_grad(lambda x: (Tensor(a) * Tensor(x)).sum().item(), b.copy())
        assert np.allclose(tb.grad, num, atol=1e-7)


class TestMatmulShapes:
    def test_matmul_grad(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 5))
        ta, tb = Tensor(a.copy()), Tensor(b.copy())
        (ta @ tb).sum().backward()
        assert np.allclose(ta.grad, numeric_grad(
            lambda x: (Tensor(x) @ Tensor(b)).sum().item(), a.copy()), atol=1e-7)
        assert np.allclose(tb.grad, numeric_grad(
            lambda x: (Tensor(a) @ Tensor(x)).sum().item(), b.copy()), atol=1e-7)

    def test_batched_matmul_broadcast(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(2, 4, 3))
        w = rng.normal(size=(3, 5))
        tw = Tensor(w.copy())
        (Tensor(a) @ tw).sum().backward()
        num = numeric_grad(lambda x: (Tensor(a) @ Tensor(x)).sum().item(), w.copy())
        assert np.allclose(tw.grad, num, atol=1e-7)

    def test_reshape_transpose_swapaxes(self):
        check_op(lambda t: t.reshape(6, 2).transpose(1, 0).swapaxes(0, 1), (3, 4))

    def test_getitem(self):
        check_op(lambda t: t[1:] * 2.0, (4, 3))

    def test_sum_axis_keepdims(self):
        check_op(lambda t: t.sum(axis=1, keepdims=True) * t, (3, 4))

    def test_mean(self):
        t = Tensor(np.arange(6.0).reshape(2, 3))
        assert t.mean().item() == pytest.approx(2.5)

    def test_concat_grads(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.full((1, 3), 2.0))
        out = concat([a, b], axis=0)
        (out * out).sum().backward()
        assert np.allclose(a.grad, 2.0)
        assert np.allclose(b.grad, 4.0)

    def test_take_accumulates_repeats(self):
        table = Tensor(np.zeros((4, 2)))
        out = take(table, np.array([1, 1, 3]))
        out.sum().backward()
        assert np.allclose(table.grad[1], 2.0)
        assert np.allclose(table.grad[3], 1.0)
        assert np.allclose(table.grad[0], 0.0)


class TestBackwardGraph:
    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError):
            Tensor(np.ones(3)).backward()

    def test_reused_node_accumulates(self):
        x = Tensor(np.array(2.0))
        y = x * x + x * 3.0
        y.backward()
        assert x.grad == pytest.approx(7.0)  # d/dx (x^2 + 3x) at 2

    def test_requires_grad_false_blocks(self):
        x = Tensor(np.ones(3), requires_grad=False)
        y = Tensor(np.ones(3))
        (x * y).sum().backward()
        assert x.grad is None
        assert y.grad is not None

    def test_deep_chain_iterative_walk(self):
        # deep graphs must not hit the recursion limit
        x = Tensor(np.array(1.0))
        y = x
        for _ in range(5000):
            y = y * 1.0001
        y.backward()
        assert np.isfinite(x.grad)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_ln_v(self):
        logits = Tensor(np.zeros((3, 4)))
        loss = softmax_cross_entropy(logits, np.zeros(3, dtype=int),
                                     np.ones(3, dtype=bool))
        assert loss.item() == pytest.approx(np.log(4), abs=1e-12)

    def test_dominant_logit_loss_to_zero(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 50.0
        loss = softmax_cross_entropy(Tensor(logits), np.array([2]),
                                     np.array([True]))
        assert loss.item() < 1e-12

    def test_three_logit_value(self):
        # softmax([2,1,0])[0] = 0.6652..., -log = 0.40761
        loss = softmax_cross_entropy(Tensor(np.array([[2.0, 1.0, 0.0]])),
                                     np.array([0]), np.array([True]))
        assert loss.item() == pytest.approx(0.40761, abs=5e-6)

    def test_empty_mask_error(self):
        with pytest.raises(ValueError, match="empty mask"):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))),
                                  np.zeros(2, dtype=int),
                                  np.zeros(2, dtype=bool))

    def test_target_out_of_vocab_error(self):
        with pytest.raises(ValueError, match="vocabulary"):
            softmax_cross_entropy(Tensor(np.zeros((1, 3))), np.array([3]),
                                  np.array([True]))

    def test_masked_positions_do_not_contribute(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(size=(4, 6))
        targets = rng.integers(0, 6, size=4)
        mask = np.array([True, False, True, False])
        full = softmax_cross_entropy(Tensor(logits), targets, mask).item()
        sub = softmax_cross_entropy(Tensor(logits[mask]), targets[mask],
                                    np.ones(2, dtype=bool)).item()
        assert full == pytest.approx(sub, abs=1e-12)

    def test_gradient_matches_numeric(self):
        rng = np.random.default_rng(6)
        logits = rng.normal(size=(3, 5))
        targets = np.array([1, 4, 0])
        mask = np.array([True, True, False])
        t = Tensor(logits.copy())
        softmax_cross_entropy(t, targets, mask).backward()
        num = numeric_grad(lambda x: softmax_cross_entropy(
            Tensor(x), targets, mask).item(), logits.copy())
        assert np.allclose(t.grad, num, atol=1e-8)


class TestMaskedSoftmaxAndNorm:
    def test_masked_softmax_zero_on_minus_inf(self):
        scores = np.array([[1.0, 2.0, -np.inf]])
        p = masked_softmax(Tensor(scores)).data
        assert p[0, 2] == 0.0
        assert p.sum() == pytest.approx(1.0)

    def test_masked_softmax_grad(self):
        rng = np.random.default_rng(7)
        s = rng.normal(size=(2, 4))
        t = Tensor(s.copy())
        (masked_softmax(t) * Tensor(rng.normal(size=(2, 4)),
                                    requires_grad=False)).sum().backward()
        assert np.all(np.isfinite(t.grad))

    def test_normalize_last_stats(self):
        rng = np.random.default_rng(8)
        y = normalize_last(Tensor(rng.normal(2.0, 3.0, size=(5, 16)))).data
        assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-12)
        assert np.allclose(y.std(axis=-1), 1.0, atol=1e-3)

    def test_normalize_last_grad(self):
        check_op(lambda t: normalize_last(t) * normalize_last(t), (3, 8),
                 tol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8),
       st.integers(0, 7))
def test_cross_entropy_vs_direct_formula(logits, target):
    target = target % len(logits)
    arr = np.array([logits])
    loss = softmax_cross_entropy(Tensor(arr), np.array([target]),
                                 np.array([True])).item()
    z = arr[0] - arr[0].max()
    expect = float(np.log(np.exp(z).sum()) - z[target])
    assert loss == pytest.approx(expect, abs=1e-10)
