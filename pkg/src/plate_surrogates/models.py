"""Surrogate families mapping an input window to one predicted output.

Windows arrive newest-first, shape ``(batch, s)``. The GRU consumes them in
chronological order (oldest sample first) so that its last hidden state has
just seen the newest input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .nn_core import ParamStore, elu, elu_grad, glorot_uniform, orthogonal, sigmoid_inplace

FAMILIES = ("LR", "MLP", "GRU")
DEFAULT_GRU_WIDTH = 16


@dataclass(frozen=True)
class ModelSpec:
    family: str
    s: int
    h: int = 0
    widths: tuple[int, ...] = field(default=())
    seed: int = 0

    def __post_init__(self):
        fam = str(self.family).upper()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        if self.s < 1:
            raise ValueError("window length s must be >= 1")
        widths = tuple(int(w) for w in self.widths)
        if fam == "LR":
            if self.h != 0:
                raise ValueError("LR has no hidden layers (h must be 0)")
            if widths:
                raise ValueError("LR takes no widths")
        elif self.h < 1:
            raise ValueError(f"{fam} needs h >= 1; use family LR for the h=0 model")
        elif fam == "MLP":
            if not widths:
                widths = (self.s,) * self.h
            if widths != (self.s,) * self.h:
                raise ValueError("MLP hidden widths must all equal s")
        else:
            if not widths:
                widths = (DEFAULT_GRU_WIDTH,) * self.h
            elif len(widths) == 1 and self.h > 1:
                widths = widths * self.h
            if len(widths) != self.h or min(widths) < 1:
                raise ValueError("GRU needs one positive width per layer")
        object.__setattr__(self, "widths", widths)

    def to_dict(self) -> dict:
        return dict(family=self.family, s=self.s, h=self.h, widths=list(self.widths), seed=self.seed)

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(family=d["family"], s=int(d["s"]), h=int(d.get("h", 0)),
                   widths=tuple(d.get("widths", ())), seed=int(d.get("seed", 0)))

    @property
    def label(self) -> str:
        return f"{self.family}_{self.s}_{self.h}"


def param_layout(spec: ModelSpec):
    layout = []
    if spec.family == "MLP":
        for i in range(1, spec.h + 1):
            layout += [(f"mlp{i}.W", (spec.s, spec.s)), (f"mlp{i}.b", (spec.s,))]
        last = spec.s
    elif spec.family == "GRU":
        n_in = 1
        for i, n in enumerate(spec.widths, start=1):
            for gate in "vrx":
                layout.append((f"gru{i}.W_{gate}", (n, n)))
            for gate in "vrx":
                layout.append((f"gru{i}.V_{gate}", (n, n_in)))
            for gate in "vrx":
                layout.append((f"gru{i}.b_{gate}", (n,)))
            n_in = n
        last = spec.widths[-1]
    else:
        last = spec.s
    layout += [("out.W", (1, last)), ("out.b", (1,))]
    return layout


def expected_param_count(spec: ModelSpec) -> int:
    if spec.family == "LR":
        return spec.s + 1
    if spec.family == "MLP":
        return spec.h * (spec.s**2 + spec.s) + spec.s + 1
    total, n_prev = 0, 1
    for n in spec.widths:
        total += 3 * (n * n + n * n_prev + n)
        n_prev = n
    return total + spec.widths[-1] + 1


def init_params(spec: ModelSpec, store: ParamStore, seed: int | None = None) -> None:
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    store.theta[:] = 0.0
    for name, shape in store.layout:
        if len(shape) != 2:
            continue
        if ".W_" in name:
            store[name][...] = orthogonal(rng, shape[0])
        else:
            store[name][...] = glorot_uniform(rng, *shape)
    if spec.family == "GRU":
        for i in range(1, spec.h + 1):
            store[f"gru{i}.b_v"][...] = 1.0


# ---------------------------------------------------------------------------
# LR
# ---------------------------------------------------------------------------

def lr_forward(W, b, X):
    X = np.asarray(X, dtype=float)
    return X @ np.asarray(W).reshape(-1) + float(np.asarray(b).reshape(-1)[0])


def lr_fit_closed_form(X, y, jitter: float = 1e-10):
    """Least-squares ``(W, b)`` via ridge-jittered normal equations."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, s = X.shape
    if n < s + 1:
        raise ValueError(f"need at least s+1={s + 1} rows, got {n}")
    A = np.empty((n, s + 1))
    A[:, :s] = X
    A[:, s] = 1.0
    gram = A.T @ A
    gram[np.diag_indices_from(gram)] += jitter * np.trace(gram)
    try:
        sol = linalg.solve(gram, A.T @ y, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise ValueError(f"normal equations are rank deficient: {exc}") from exc
    return sol[:s].reshape(1, s), float(sol[s])


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

def mlp_forward(params, X, h: int):
    """Returns ``(yhat, cache)``; ``cache`` holds pre-activations for backward."""
    a = np.asarray(X, dtype=float)
    acts, pres = [a], []
    for i in range(1, h + 1):
        z = a @ params[f"mlp{i}.W"].T + params[f"mlp{i}.b"]
        a = elu(z)
        pres.append(z)
        acts.append(a)
    yhat = a @ params["out.W"][0] + params["out.b"][0]
    return yhat, (acts, pres)


def mlp_backward(params, cache, dy, h: int) -> dict:
    acts, pres = cache
    grads = {"out.W": (dy @ acts[-1])[None, :], "out.b": np.array([dy.sum()])}
    da = np.outer(dy, params["out.W"][0])
    for i in range(h, 0, -1):
        dz = da * elu_grad(pres[i - 1])
        grads[f"mlp{i}.W"] = dz.T @ acts[i - 1]
        grads[f"mlp{i}.b"] = dz.sum(0)
        if i > 1:
            da = dz @ params[f"mlp{i}.W"]
    return grads


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

def _gru_layer_forward(params, i: int, inp, keep: bool):
    """One GRU layer over a time-major sequence ``inp`` of shape ``(s, B, n_in)``."""
    s, B, _ = inp.shape
    W_vr_t = np.ascontiguousarray(
        np.concatenate([params[f"gru{i}.W_v"], params[f"gru{i}.W_r"]]).T)
    W_x_t = np.ascontiguousarray(params[f"gru{i}.W_x"].T)
    n = W_x_t.shape[0]
    V_vr = np.concatenate([params[f"gru{i}.V_v"], params[f"gru{i}.V_r"]])
    b_vr = np.concatenate([params[f"gru{i}.b_v"], params[f"gru{i}.b_r"]])
    P_vr = inp @ V_vr.T + b_vr
    P_x = inp @ params[f"gru{i}.V_x"].T + params[f"gru{i}.b_x"]
    H = np.empty((s + 1, B, n))
    H[0] = 0.0
    if keep:
        G, C, HR = np.empty((s, B, 2 * n)), np.empty((s, B, n)), np.empty((s, B, n))
    else:
        g, c, hr = np.empty((B, 2 * n)), np.empty((B, n)), np.empty((B, n))
    for j in range(s):
        if keep:
            g, c, hr = G[j], C[j], HR[j]
        np.matmul(H[j], W_vr_t, out=g)
        g += P_vr[j]
        sigmoid_inplace(g)
        np.multiply(H[j], g[:, n:], out=hr)
        np.matmul(hr, W_x_t, out=c)
        c += P_x[j]
        np.tanh(c, out=c)
        # x_j = v * x_{j-1} + (1 - v) * candidate
        hn = H[j + 1]
        np.subtract(H[j], c, out=hn)
        hn *= g[:, :n]
        hn += c
    cache = (inp, H, G, C, HR) if keep else None
    return H[1:], cache


def _gru_layer_backward(params, i: int, cache, d_out, need_input_grad: bool):
    inp, H, G, C, HR = cache
    s, B, n = C.shape
    W_vr = np.concatenate([params[f"gru{i}.W_v"], params[f"gru{i}.W_r"]])
    W_x = params[f"gru{i}.W_x"]
    HP = H[:-1]
    v, r = G[..., :n], G[..., n:]
    # step-local Jacobian factors do not depend on the carried gradient
    a_x = (1.0 - v) * (1.0 - C * C)
    a_v = (HP - C) * v * (1.0 - v)
    a_r = HP * r * (1.0 - r)
    dP_vr = np.empty((s, B, 2 * n))
    dP_x = np.empty((s, B, n))
    dh = np.zeros((B, n))
    for j in range(s - 1, -1, -1):
        dh += d_out[j]
        dzx = dP_x[j]
        np.multiply(dh, a_x[j], out=dzx)
        dhr = dzx @ W_x
        dz = dP_vr[j]
        np.multiply(dh, a_v[j], out=dz[:, :n])
        np.multiply(dhr, a_r[j], out=dz[:, n:])
        dh *= v[j]
        dhr *= r[j]
        dh += dhr
        dh += dz @ W_vr
    flat = lambda a: a.reshape(s * B, -1)
    dW_vr = flat(dP_vr).T @ flat(HP)
    dV_vr = flat(dP_vr).T @ flat(inp)
    db_vr = dP_vr.sum(axis=(0, 1))
    grads = {
        f"gru{i}.W_v": dW_vr[:n], f"gru{i}.W_r": dW_vr[n:],
        f"gru{i}.W_x": flat(dP_x).T @ flat(HR),
        f"gru{i}.V_v": dV_vr[:n], f"gru{i}.V_r": dV_vr[n:],
        f"gru{i}.V_x": flat(dP_x).T @ flat(inp),
        f"gru{i}.b_v": db_vr[:n], f"gru{i}.b_r": db_vr[n:],
        f"gru{i}.b_x": dP_x.sum(axis=(0, 1)),
    }
    d_inp = None
    if need_input_grad:
        V_vr = np.concatenate([params[f"gru{i}.V_v"], params[f"gru{i}.V_r"]])
        d_inp = dP_vr @ V_vr + dP_x @ params[f"gru{i}.V_x"]
    return grads, d_inp


def gru_forward(params, X, h: int, keep: bool = True, return_states: bool = False):
    """Stacked GRU on newest-first windows ``X``; returns ``(yhat, cache)``.

    With ``return_states`` the per-layer hidden sequences (time-major,
    ``(s, B, n_i)``) are returned as a third element.
    """
    X = np.asarray(X, dtype=float)
    seq = np.ascontiguousarray(X.T[::-1])[:, :, None]
    caches, states = [], []
    for i in range(1, h + 1):
        seq, cache = _gru_layer_forward(params, i, seq, keep)
        caches.append(cache)
        if return_states:
            states.append(seq)
    last = seq[-1]
    yhat = last @ params["out.W"][0] + params["out.b"][0]
    cache = (caches, last)
    if return_states:
        return yhat, cache, states
    return yhat, cache


def gru_backward(params, cache, dy, h: int) -> dict:
    caches, last = cache
    grads = {"out.W": (dy @ last)[None, :], "out.b": np.array([dy.sum()])}
    s, B, n = caches[-1][3].shape
    d_out = np.zeros((s, B, n))
    d_out[-1] = np.outer(dy, params["out.W"][0])
    for i in range(h, 0, -1):
        g, d_out = _gru_layer_backward(params, i, caches[i - 1], d_out, need_input_grad=i > 1)
        grads.update(g)
    return grads


# ---------------------------------------------------------------------------
# Model wrapper
# ---------------------------------------------------------------------------

class Model:
    """A :class:`ModelSpec` bound to a :class:`ParamStore`."""

    predict_chunk = 2048

    def __init__(self, spec: ModelSpec, store: ParamStore | None = None, init: bool = True):
        self.spec = spec
        if store is None:
            store = ParamStore(param_layout(spec))
            if init:
                init_params(spec, store)
        if store.size != expected_param_count(spec):
            raise ValueError("parameter store does not match the model spec")
        self.store = store

    @classmethod
    def from_theta(cls, spec: ModelSpec, theta) -> "Model":
        model = cls(spec, init=False)
        model.store.theta[:] = theta
        return model

    def _forward(self, X, keep: bool):
        fam, p = self.spec.family, self.store
        if fam == "LR":
            return lr_forward(p["out.W"], p["out.b"], X), X
        if fam == "MLP":
            return mlp_forward(p, X, self.spec.h)
        return gru_forward(p, X, self.spec.h, keep=keep)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.spec.s:
            raise ValueError(f"window length {X.shape[1]} does not match model s={self.spec.s}")
        chunk = self.predict_chunk if self.spec.family == "GRU" else 65536
        out = np.empty(len(X))
        for a in range(0, len(X), chunk):
            out[a:a + chunk] = self._forward(X[a:a + chunk], keep=False)[0]
        return out

    def loss_and_grad(self, X, y) -> float:
        """Batch MSE; writes its gradient into ``store.grad`` and returns the loss."""
        y = np.asarray(y, dtype=float)
        yhat, cache = self._forward(X, keep=True)
        resid = yhat - y
        loss = float(np.mean(resid * resid))
        dy = 2.0 * resid / len(y)
        fam, p = self.spec.family, self.store
        if fam == "LR":
            grads = {"out.W": (dy @ cache)[None, :], "out.b": np.array([dy.sum()])}
        elif fam == "MLP":
            grads = mlp_backward(p, cache, dy, self.spec.h)
        else:
            grads = gru_backward(p, cache, dy, self.spec.h)
        for name, g in grads.items():
            p.grad_view(name)[...] = g
        return loss

    def loss_fn(self, X, y):
        """``theta -> (loss, grad)`` closure for gradient checking."""
        def f(theta):
            saved = self.store.theta.copy()
            self.store.theta[:] = theta
            try:
                loss = self.loss_and_grad(X, y)
                return loss, self.store.grad.copy()
            finally:
                self.store.theta[:] = saved
        return f
