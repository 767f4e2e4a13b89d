import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ecgnn.numerics import (Adam, AdamState, NonFiniteError, ZeroNormError, adam_step, check_finite,
                            finite_diff_check, glorot_init, l2_normalize, leaky_relu, leaky_relu_grad, make_rng,
                            matmul)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_matmul_hand_cases():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)
    assert matmul(m, np.ones((2, 1))).tolist() == [[3.0], [7.0]]


def test_matmul_associative():
    rng = make_rng(0)
    a, b, c = (rng.standard_normal((8, 8)) for _ in range(3))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-9)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_leaky_relu():
    assert leaky_relu(-1.0, 0.01) == pytest.approx(-0.01)
    assert leaky_relu(2.0, 0.3) == 2.0
    x = np.linspace(-3, 3, 13)
    assert np.array_equal(leaky_relu(x, 1.0), x)
    with pytest.raises(ValueError):
        leaky_relu(x, -0.1)
    assert leaky_relu_grad(np.array([-1.0, 0.0, 2.0]), 0.2).tolist() == [0.2, 1.0, 1.0]


def test_l2_normalize():
    np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)
    u = np.array([0.0, 1.0, 0.0])
    assert np.array_equal(l2_normalize(u), u)
    with pytest.raises(ZeroNormError):
        l2_normalize(np.zeros(3))
    with pytest.raises(NonFiniteError):
        l2_normalize([np.inf, 1.0])


@settings(max_examples=200)
@given(arrays(float, st.integers(1, 30), elements=st.floats(-1e3, 1e3)), st.sampled_from([0.5, 3.0, 100.0]))
def test_l2_normalize_scale_invariant(x, c):
    if np.linalg.norm(x) <= 1e-6:
        return
    y = l2_normalize(x)
    assert abs(np.linalg.norm(y) - 1.0) <= 1e-12
    np.testing.assert_allclose(l2_normalize(c * x), y, rtol=0, atol=1e-12)


def test_glorot_bounds_and_determinism():
    w = glorot_init(40, 25, make_rng(3))
    bound = np.sqrt(6 / 65)
    assert w.shape == (40, 25) and np.all(np.abs(w) <= bound)
    assert np.array_equal(w, glorot_init(40, 25, make_rng(3)))
    assert not np.array_equal(w, glorot_init(40, 25, make_rng(4)))


def test_glorot_mean_within_standard_error():
    w = glorot_init(100, 100, make_rng(11))
    # uniform on [-b, b] has sd b / sqrt(3)
    sigma = np.sqrt(6 / 200) / np.sqrt(3)
    assert abs(w.mean()) <= 3 * sigma / np.sqrt(w.size)


def test_adam_first_step_moves_by_lr():
    for g in (-3.0, 1e-3, 250.0):
        p = np.array([[0.7]])
        new, st_ = adam_step(p, np.array([[g]]), AdamState.zeros_like(p))
        assert abs(abs(new - p)[0, 0] - 1e-3) < 1e-6
        assert st_.t == 1


def test_adam_zero_grad_and_zero_lr():
    p = make_rng(0).standard_normal((3, 4))
    new, _ = adam_step(p, np.zeros_like(p), AdamState.zeros_like(p))
    assert np.array_equal(new, p)
    new, _ = adam_step(p, np.ones_like(p), AdamState.zeros_like(p, lr=0.0))
    assert np.array_equal(new, p)


def test_adam_pure_and_matches_stateful():
    rng = make_rng(1)
    p = rng.standard_normal((5, 2))
    s0 = AdamState.zeros_like(p)
    grads = [rng.standard_normal((5, 2)) for _ in range(4)]
    a1 = adam_step(p, grads[0], s0)
    a2 = adam_step(p, grads[0], s0)
    assert np.array_equal(a1[0], a2[0]) and not s0.m.any()

    params, opt = {"p": p.copy()}, Adam()
    q, s = p, s0
    for g in grads:
        q, s = adam_step(q, g, s)
        opt.step(params, {"p": g})
    assert np.array_equal(params["p"], q)


def test_adam_shape_mismatch():
    p = np.zeros((2, 2))
    with pytest.raises(ValueError):
        adam_step(p, np.zeros((2, 3)), AdamState.zeros_like(p))


def test_adam_rejects_nan_gradient():
    p = np.zeros(2)
    with pytest.raises(NonFiniteError):
        adam_step(p, np.array([np.nan, 0.0]), AdamState.zeros_like(p))


def test_finite_diff_quadratic_and_linear():
    x = make_rng(2).standard_normal(10)
    assert finite_diff_check(lambda v: 0.5 * v @ v, x, x, h=1e-5) < 1e-8
    c = make_rng(3).standard_normal(10)
    assert finite_diff_check(lambda v: c @ v, x, c) < 1e-10


def test_finite_diff_detects_wrong_gradient():
    # every |x_i| >= 0.5 so each entry's error is |x - 2x| / (2|x|) = 0.5
    x = np.array([0.5, -1.0, 2.0, -3.5])
    err = finite_diff_check(lambda v: 0.5 * v @ v, x, 2 * x)
    assert err == pytest.approx(0.5, abs=1e-8)


def test_finite_diff_restores_params():
    x = np.arange(6.0).reshape(2, 3)
    before = x.copy()
    finite_diff_check(lambda v: float(np.sum(v ** 2)), x, 2 * x)
    assert np.array_equal(x, before)


def test_finite_diff_rejects_nonfinite_objective():
    with pytest.raises(NonFiniteError):
        finite_diff_check(lambda v: float("nan"), np.zeros(2), np.zeros(2))


@settings(max_examples=100)
@given(arrays(float, st.integers(1, 20), elements=finite), st.floats(0, 1))
def test_operations_keep_finite(x, slope):
    check_finite(leaky_relu(x, slope))
    check_finite(leaky_relu_grad(x, slope))
