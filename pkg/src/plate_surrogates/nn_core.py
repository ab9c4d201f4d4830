"""Dense numerics for the surrogate networks: activations, flat parameter
storage with named views, Adam, and a finite-difference gradient checker."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "plate-surrogates-checkpoint"
CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    """Loss or gradient became non-finite."""


def elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def sigmoid(x):
    # two-branch form: never exponentiates a positive number
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid_inplace(x):
    """``sigmoid`` overwriting ``x``, via ``(1 + tanh(x/2)) / 2`` (overflow-free)."""
    x *= 0.5
    np.tanh(x, out=x)
    x *= 0.5
    x += 0.5
    return x


def tanh(x):
    return np.tanh(x)


class ParamStore:
    """Flat parameter vector ``theta`` with named, contiguous views.

    ``layout`` is an ordered list of ``(name, shape)``. ``store[name]`` and
    ``store.grad_view(name)`` are reshaped views into ``theta`` and ``grad``,
    so in-place edits on either side are shared.
    """

    def __init__(self, layout):
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        self.slices = {}
        offset = 0
        for name, shape in self.layout:
            if name in self.slices:
                raise ValueError(f"duplicate parameter name {name!r}")
            size = int(np.prod(shape))
            self.slices[name] = (offset, offset + size, shape)
            offset += size
        self.size = offset
        self.theta = np.zeros(offset)
        self.grad = np.zeros(offset)
        self.m = np.zeros(offset)
        self.v = np.zeros(offset)
        self.step = 0

    def __getitem__(self, name) -> np.ndarray:
        a, b, shape = self.slices[name]
        return self.theta[a:b].reshape(shape)

    def grad_view(self, name) -> np.ndarray:
        a, b, shape = self.slices[name]
        return self.grad[a:b].reshape(shape)

    def names(self):
        return [name for name, _ in self.layout]

    def zero_grad(self):
        self.grad[:] = 0.0

    def copy(self) -> "ParamStore":
        other = ParamStore(self.layout)
        other.theta[:] = self.theta
        other.grad[:] = self.grad
        other.m[:] = self.m
        other.v[:] = self.v
        other.step = self.step
        return other


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamStore:
    """One bias-corrected Adam update of ``store.theta`` from ``store.grad``."""
    g = store.grad
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")
    store.step += 1
    store.m *= beta1
    store.m += (1.0 - beta1) * g
    store.v *= beta2
    store.v += (1.0 - beta2) * g * g
    m_hat = store.m / (1.0 - beta1**store.step)
    v_hat = store.v / (1.0 - beta2**store.step)
    store.theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return store


def glorot_uniform(rng, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def check_gradient(f, theta0, grad=None, n_samples: int | None = None, rng=None,
                   rel_step: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative discrepancy between an analytic gradient and central differences.

    ``f(theta)`` returns ``(loss, grad)``; ``grad`` can be passed instead of
    being taken from ``f(theta0)``. Coordinate ``i`` uses step
    ``rel_step * (1 + |theta_i|)``. Discrepancy per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps coordinates whose
    gradient sits below the difference-quotient noise (~1e-11 for O(1) losses)
    from dominating. ``n_samples`` checks a random subset.
    """
    theta0 = np.array(theta0, dtype=float)
    if grad is None:
        _, grad = f(theta0.copy())
    grad = np.asarray(grad, dtype=float)
    idx = np.arange(theta0.size)
    if n_samples is not None and n_samples < theta0.size:
        rng = np.random.default_rng(rng)
        idx = rng.choice(theta0.size, size=n_samples, replace=False)
    worst = 0.0
    for i in idx:
        h = rel_step * (1.0 + abs(theta0[i]))
        tp = theta0.copy()
        tp[i] += h
        tm = theta0.copy()
        tm[i] -= h
        num = (f(tp)[0] - f(tm)[0]) / (2.0 * h)
        err = abs(grad[i] - num) / max(abs(grad[i]), abs(num), floor)
        worst = max(worst, err)
    return worst


def save_checkpoint(path, spec: dict, theta, norm_stats: dict | None, seed: int,
                    extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": spec,
        "seed": int(seed),
        "norm_stats": norm_stats,
        "theta": [float(x) for x in np.asarray(theta)],
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    doc["theta"] = np.asarray(doc["theta"], dtype=float)
    return doc
