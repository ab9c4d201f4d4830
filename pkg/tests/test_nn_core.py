import math

import numpy as np
import pytest

from plate_surrogates.nn_core import (
    DivergenceError, ParamStore, adam_step, check_gradient, elu, elu_grad, glorot_uniform,
    load_checkpoint, orthogonal, save_checkpoint, sigmoid, sigmoid_inplace, tanh,
)


def test_elu_values():
    assert elu(np.array([0.0]))[0] == 0.0
    assert elu(np.array([1.0]))[0] == 1.0
    assert elu(np.array([-1.0]))[0] == pytest.approx(math.exp(-1) - 1, rel=1e-15)
    assert elu(np.array([-1.0]))[0] == pytest.approx(-0.63212, abs=1e-5)
    assert np.isfinite(elu(np.array([-1e308, 1e308]))).all()


def test_elu_grad_values():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 3.0])
    assert np.array_equal(elu_grad(x)[3:], [1.0, 1.0])
    assert np.allclose(elu_grad(x)[:3], np.exp(x[:3]))


def test_sigmoid_and_tanh(rng):
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert tanh(np.array([0.0]))[0] == 0.0
    x = rng.standard_normal(1000) * 20
    assert np.max(np.abs(sigmoid(-x) - (1 - sigmoid(x)))) <= 1e-15
    big = sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(big)) and big[0] >= 0 and big[1] <= 1


def test_sigmoid_inplace_matches(rng):
    x = rng.standard_normal(500) * 10
    y = x.copy()
    out = sigmoid_inplace(y)
    assert out is y
    assert np.max(np.abs(y - sigmoid(x))) < 1e-15


def test_param_store_views_tile_theta():
    store = ParamStore([("a.W", (3, 4)), ("a.b", (3,)), ("out.W", (1, 3)), ("out.b", (1,))])
    assert store.size == 12 + 3 + 3 + 1
    covered = np.zeros(store.size, dtype=int)
    for name in store.names():
        a, b, _ = store.slices[name]
        covered[a:b] += 1
    assert np.all(covered == 1)
    store["a.W"][1, 2] = 7.0
    assert store.theta[1 * 4 + 2] == 7.0
    store.grad_view("out.b")[...] = 3.0
    assert store.grad[-1] == 3.0
    assert store.grad.shape == store.theta.shape
    with pytest.raises(ValueError):
        ParamStore([("x", (2,)), ("x", (3,))])


def test_param_store_copy_is_independent():
    store = ParamStore([("w", (2,))])
    other = store.copy()
    other.theta[0] = 1.0
    assert store.theta[0] == 0.0


def test_adam_zero_gradient():
    store = ParamStore([("w", (3,))])
    store.theta[:] = [1.0, -2.0, 3.0]
    store.v[:] = 0.25
    adam_step(store)
    assert np.array_equal(store.theta, [1.0, -2.0, 3.0])
    assert np.all(store.m == 0) and np.allclose(store.v, 0.25 * 0.999)
    assert store.step == 1


def test_adam_first_step():
    store = ParamStore([("w", (1,))])
    store.grad[:] = 1.0
    adam_step(store, lr=1e-3)
    # m_hat = v_hat = 1 after bias correction
    assert store.theta[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-14)


def test_adam_deterministic_and_rejects_nan(rng):
    a, b = ParamStore([("w", (5,))]), ParamStore([("w", (5,))])
    for _ in range(3):
        g = rng.standard_normal(5)
        a.grad[:] = g
        b.grad[:] = g
        adam_step(a)
        adam_step(b)
    assert np.array_equal(a.theta, b.theta)
    a.grad[2] = np.nan
    with pytest.raises(DivergenceError):
        adam_step(a)


def test_check_gradient_quadratic(rng):
    theta = rng.standard_normal(20)
    assert check_gradient(lambda t: (t @ t, 2 * t), theta) < 1e-9


def test_check_gradient_flags_wrong_gradient(rng):
    theta = rng.standard_normal(10)
    assert check_gradient(lambda t: (t @ t, 2.2 * t), theta) > 0.05


def test_check_gradient_subset(rng):
    theta = rng.standard_normal(100)
    f = lambda t: (np.sum(np.sin(t)), np.cos(t))  # noqa: E731
    assert check_gradient(f, theta, n_samples=10, rng=0) < 1e-7


def test_initializers(rng):
    W = glorot_uniform(rng, 30, 50)
    assert W.shape == (30, 50)
    assert np.max(np.abs(W)) <= math.sqrt(6 / 80)
    Q = orthogonal(rng, 16)
    assert np.allclose(Q.T @ Q, np.eye(16), atol=1e-12)


def test_checkpoint_roundtrip(tmp_path, rng):
    theta = rng.standard_normal(17)
    p = tmp_path / "c.json"
    save_checkpoint(p, {"family": "LR", "s": 16}, theta, {"y_std": 2.0}, seed=4, extra={"k": 1})
    doc = load_checkpoint(p)
    assert np.array_equal(doc["theta"], theta)
    assert doc["seed"] == 4 and doc["spec"]["s"] == 16 and doc["extra"]["k"] == 1
    p.write_text(p.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(ValueError):
        load_checkpoint(p)
    p.write_text("{}")
    with pytest.raises(ValueError):
        load_checkpoint(p)
