"""Gradient and contract tests for the tensor core.

Every exported primitive is finite-difference checked; the structural
contracts (broadcast limits, graph consumption, frozen parameters,
determinism) get their own tests.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from taxa import rng as R
from taxa import tensor as T
from taxa.errors import GraphConsumedError, NonFiniteError, ShapeError

TOL = 1e-6  # 64-bit tolerance for smooth primitives


def leaf(arr):
    return T.Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def check(f, x, h=1e-5, tol=TOL):
    err = T.grad_check(f, T.Tensor(np.asarray(x, dtype=np.float64)), h=h)
    assert err < tol, f"grad_check error {err}"


# ---------------------------------------------------------------------------
# spec'd examples


def test_matmul_identity():
    m = np.random.default_rng(1).normal(size=(3, 3))
    out = T.matmul(T.Tensor(np.eye(3)), T.Tensor(m))
    np.testing.assert_array_equal(out.data, m)


def test_mse_zero_residual():
    x = T.Tensor(np.random.default_rng(2).normal(size=(4, 5)))
    assert T.mse(x, x).item() == 0.0


def test_conv2d_identity_kernel():
    x = np.random.default_rng(3).random((2, 1, 5, 5))
    k = np.ones((1, 1, 1, 1))
    out = T.conv2d(T.Tensor(x), T.Tensor(k), stride=1, padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_backward_square():
    x = leaf(3.0)
    loss = x * x
    T.backward(loss)
    assert x.grad == pytest.approx(6.0)


def test_frozen_parameter_gets_no_grad():
    w = T.Parameter("w", np.ones((2, 2)))
    w.set_frozen(True)
    z = T.Tensor(np.ones((2, 1)))
    t = T.Tensor(np.zeros((2, 1)))
    loss = T.mse(T.matmul(w.tensor(), z), t)
    T.backward(loss)
    assert w.grad is None  # zero by contract


def test_two_layer_perceptron_fd_oracle():
    # random 2-layer MLP, gradients vs central differences per coordinate
    g = np.random.default_rng(7)
    x = np.asarray(g.normal(size=(3, 4)))
    w1 = g.normal(size=(4, 8)) * 0.5
    w2 = g.normal(size=(8, 1)) * 0.5

    def f(wflat):
        a = T.reshape(wflat, (4, 8))
        h = T.gelu(T.matmul(T.Tensor(x), a))
        out = T.matmul(h, T.Tensor(w2))
        return T.mse(out, T.Tensor(np.zeros((3, 1))))

    err = T.grad_check(f, T.Tensor(w1.reshape(-1)), h=1e-4)
    assert err < 1e-3


def test_grad_check_sum_squares():
    x = np.random.default_rng(11).normal(size=7)
    err = T.grad_check(lambda t: T.tsum(t * t), T.Tensor(x), h=1e-5)
    assert err < 1e-6


def test_grad_check_constant_function():
    err = T.grad_check(lambda t: T.Tensor(np.asarray(5.0)) * 1.0, T.Tensor(np.ones(3)))
    assert err == 0.0


# ---------------------------------------------------------------------------
# per-primitive finite-difference checks


def test_grad_add_sub_mul():
    g = np.random.default_rng(0)
    b = g.normal(size=(4, 3))
    check(lambda x: T.tsum((x + T.Tensor(b)) * T.Tensor(b * 2.0)), g.normal(size=(4, 3)))
    check(lambda x: T.tsum(T.Tensor(b) - x * x), g.normal(size=(4, 3)))


def test_grad_broadcast_add_leading():
    g = np.random.default_rng(1)
    big = T.Tensor(g.normal(size=(5, 4, 3)))
    check(lambda x: T.tsum((big + x) * (big + x)), g.normal(size=(3,)))
    check(lambda x: T.tsum(T.mul(big, x)), g.normal(size=(4, 3)))


def test_grad_matmul_all_rank_cases():
    g = np.random.default_rng(2)
    a2 = g.normal(size=(3, 4))
    b2 = g.normal(size=(4, 2))
    a3 = g.normal(size=(5, 3, 4))
    b3 = g.normal(size=(5, 4, 2))
    check(lambda x: T.tsum(T.matmul(x, T.Tensor(b2))), a2)
    check(lambda x: T.tsum(T.matmul(T.Tensor(a2), T.reshape(x, (4, 2)))), b2.reshape(-1))
    check(lambda x: T.tsum(T.matmul(x, T.Tensor(b2))), a3)
    check(lambda x: T.tsum(T.matmul(T.Tensor(a3), x)), b2)
    check(lambda x: T.tsum(T.matmul(T.Tensor(a2), x)), b3[:, :, :])
    check(lambda x: T.tsum(T.matmul(x, T.Tensor(b3))), a3)


def test_grad_conv2d_and_oracle():
    g = np.random.default_rng(3)
    x = g.normal(size=(2, 3, 6, 6))
    w = g.normal(size=(4, 3, 3, 3)) * 0.3
    for stride, pad in [(1, 0), (1, 1), (2, 1)]:
        check(lambda t: T.tsum(T.conv2d(T.reshape(t, x.shape), T.Tensor(w), stride, pad) ** 0 if False else T.conv2d(T.reshape(t, x.shape), T.Tensor(w), stride, pad)), x.reshape(-1), tol=1e-5)
        check(lambda t: T.tsum(T.conv2d(T.Tensor(x), T.reshape(t, w.shape), stride, pad)), w.reshape(-1), tol=1e-5)

    # independent oracle: scipy correlate2d, single channel pair
    xs = g.normal(size=(1, 1, 5, 5))
    ws = g.normal(size=(1, 1, 3, 3))
    ours = T.conv2d(T.Tensor(xs), T.Tensor(ws), stride=1, padding=1).data[0, 0]
    ref = signal.correlate2d(xs[0, 0], ws[0, 0], mode="same")
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_grad_conv2d_1x1_fast_path():
    g = np.random.default_rng(4)
    x = g.normal(size=(2, 5, 4, 4))
    w = g.normal(size=(3, 5, 1, 1))
    check(lambda t: T.tsum(T.conv2d(T.reshape(t, x.shape), T.Tensor(w))), x.reshape(-1), tol=1e-5)
    check(lambda t: T.tsum(T.conv2d(T.Tensor(x), T.reshape(t, w.shape))), w.reshape(-1), tol=1e-5)
    # 1x1 equals general path
    a = T.conv2d(T.Tensor(x), T.Tensor(w)).data
    b = T.conv2d(T.Tensor(np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))), T.Tensor(w), 1, 0).data[:, :, 1:-1, 1:-1]
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_grad_layer_norm():
    g = np.random.default_rng(5)
    x = g.normal(size=(3, 6))
    gain = g.normal(size=6)
    bias = g.normal(size=6)
    mixer = T.Tensor(g.normal(size=(3, 6)))
    check(lambda t: T.tsum(T.layer_norm(t, T.Tensor(gain), T.Tensor(bias)) * mixer), x, tol=1e-5)
    check(lambda t: T.tsum(T.layer_norm(T.Tensor(x), t, T.Tensor(bias))), gain, tol=1e-6)
    check(lambda t: T.tsum(T.layer_norm(T.Tensor(x), T.Tensor(gain), t)), bias, tol=1e-6)


def test_grad_softmax_gelu():
    g = np.random.default_rng(6)
    w = g.normal(size=(4, 5))
    check(lambda t: T.tsum(T.softmax(t, axis=-1) * T.Tensor(w)), g.normal(size=(4, 5)), tol=1e-5)
    check(lambda t: T.tsum(T.gelu(t)), g.normal(size=(4, 5)), tol=1e-5)


def test_grad_mse_and_cross_entropy():
    g = np.random.default_rng(8)
    a = g.normal(size=(3, 4))
    b = g.normal(size=(3, 4))
    check(lambda t: T.mse(t, T.Tensor(b)), a)
    labels = np.array([0, 2, 1])
    check(lambda t: T.cross_entropy(t, labels), g.normal(size=(3, 3)), tol=1e-5)


def test_grad_reductions_and_shapes():
    g = np.random.default_rng(9)
    x = g.normal(size=(2, 3, 4))
    w = g.normal(size=(2, 3, 4))
    check(lambda t: T.tsum(T.tmean(t, axis=(0, 2)) * T.Tensor(w.mean(axis=(0, 2)))), x)
    check(lambda t: T.tsum(T.reshape(t, (6, 4)) * T.Tensor(w.reshape(6, 4))), x)
    check(lambda t: T.tsum(T.transpose(t, (2, 0, 1)) * T.Tensor(w.transpose(2, 0, 1))), x)
    bmix = T.Tensor(g.normal(size=(5, 2, 3)))
    check(lambda t: T.tsum(T.broadcast_to(t, (5, 2, 3)) * bmix), g.normal(size=(2, 3)))
    check(lambda t: T.tsum(T.concat([t, T.Tensor(w)], axis=1) * 1.5), x)
    idx = np.array([0, 1, 1, 0])
    gmix = T.Tensor(g.normal(size=(4, 3, 4)))
    check(lambda t: T.tsum(T.gather_rows(t, idx) * gmix), x)


def test_grad_pool_and_upsample():
    g = np.random.default_rng(10)
    x = g.normal(size=(2, 3, 4, 4))
    w4 = g.normal(size=(2, 3, 2, 2))
    w8 = g.normal(size=(2, 3, 8, 8))
    check(lambda t: T.tsum(T.avg_pool2x(t) * T.Tensor(w4)), x)
    check(lambda t: T.tsum(T.upsample2x(t) * T.Tensor(w8)), x)
    # value semantics
    up = T.upsample2x(T.Tensor(x)).data
    assert up[0, 0, 0, 0] == up[0, 0, 1, 1] == x[0, 0, 0, 0]
    dn = T.avg_pool2x(T.Tensor(x)).data
    assert dn[0, 0, 0, 0] == pytest.approx(x[0, 0, :2, :2].mean())


# ---------------------------------------------------------------------------
# structural contracts


def test_backward_requires_scalar():
    x = leaf(np.ones(3))
    with pytest.raises(ShapeError):
        T.backward(x * 2.0)


def test_graph_consumed():
    x = leaf(2.0)
    loss = x * x
    T.backward(loss)
    with pytest.raises(GraphConsumedError):
        T.backward(loss)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as e:
        T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4,))))
    assert "(2, 3)" in str(e.value) and "(4,)" in str(e.value)
    with pytest.raises(ShapeError) as e:
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))
    assert "(2, 3)" in str(e.value)


def test_non_finite_result_names_op():
    big = T.Tensor(np.array([1e308]))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError) as e:
        T.mul(big, big)
    assert "mul" in str(e.value)


def test_no_middle_broadcasting():
    with pytest.raises(ShapeError):
        T.add(T.Tensor(np.ones((2, 1, 3))), T.Tensor(np.ones((2, 5, 3))))


def test_shared_subexpression_gradients():
    # d/dx of (x*x + x*x) = 4x; exercises grad accumulation across fan-out
    x = leaf(np.array([1.5, -2.0]))
    y = x * x
    loss = T.tsum(y + y)
    T.backward(loss)
    np.testing.assert_allclose(x.grad, 4 * x.data)


def test_aliasing_safe_add_fanout():
    # both parents of an add receive correct independent grads
    a = leaf(np.ones((3, 3)))
    b = leaf(np.full((3, 3), 2.0))
    s = a + b
    loss = T.tsum(s * T.Tensor(np.eye(3)) + a * 3.0)
    T.backward(loss)
    np.testing.assert_allclose(b.grad, np.eye(3))
    np.testing.assert_allclose(a.grad, np.eye(3) + 3.0)


def test_linearity_of_backward():
    g = np.random.default_rng(12)
    x0 = g.normal(size=5)

    def grad_of(fn):
        x = leaf(x0)
        T.backward(fn(x))
        return x.grad.copy()

    f = lambda x: T.tsum(x * x)
    h = lambda x: T.tsum(T.gelu(x))
    a, b = 2.5, -1.25
    combined = grad_of(lambda x: f(x) * a + h(x) * b)
    np.testing.assert_allclose(combined, a * grad_of(f) + b * grad_of(h), rtol=1e-12)


def test_determinism_same_seed_bit_identical():
    def run():
        x = T.Tensor(R.normal(123, "det-test", (8, 8)))
        w = T.Tensor(R.normal(123, "det-test-w", (8, 8)))
        return T.gelu(T.matmul(x, w)).data

    a, b = run(), run()
    assert a.tobytes() == b.tobytes()


def test_no_grad_builds_no_graph():
    x = leaf(np.ones(3))
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_precision_switch():
    T.set_precision("f32")
    assert T.Tensor(np.ones(2)).data.dtype == np.float32
    T.set_precision("f64")
    assert T.Tensor(np.ones(2)).data.dtype == np.float64
    with pytest.raises(ValueError):
        T.set_precision("f16")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_matmul_matches_numpy(n, m, k):
    g = np.random.default_rng(n * 100 + m * 10 + k)
    a, b = g.normal(size=(n, m)), g.normal(size=(m, k))
    np.testing.assert_allclose(T.matmul(T.Tensor(a), T.Tensor(b)).data, a @ b, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8))
def test_softmax_rows_sum_to_one(vals):
    out = T.softmax(T.Tensor(np.asarray(vals)), axis=-1)
    assert out.data.sum() == pytest.approx(1.0)
