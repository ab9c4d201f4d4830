"""Synthetic data generator for a controlled orthotropic Kirchhoff plate.

The plate occupies ``[0, ell1] x [0, ell2]`` with all edges free, is driven by a
point force at ``s0`` and observed through the x1-curvature at ``sensor_pt``.
Transverse displacement is expanded in a product basis of free-free beam
functions (plus constant and linear members per direction); the resulting
modal ODEs are integrated with their exact zero-order-hold transition.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, optimize, signal


class SimulationError(RuntimeError):
    """Assembly or integration produced an unusable result."""


@dataclass(frozen=True)
class PlateConfig:
    """Physical and discretization parameters (SI units).

    Defaults describe the carbon/honeycomb sandwich plate of the reference
    rig; ``nu2`` is derived from ``nu1 * e2 / e1``.
    """

    ell1: float = 1.0
    ell2: float = 0.5
    thickness: float = 3.6e-3
    rho: float = 505.6
    e1: float = 23e9
    e2: float = 14e9
    g: float = 2.2e9
    nu1: float = 0.25
    alpha: float = 5.0
    gain_k: float = 1.0
    s0: tuple[float, float] = (0.17, 0.25)
    sensor_pt: tuple[float, float] = (0.5, 0.21)
    n1: int = 8
    n2: int = 6
    dt: float = 1.0 / 3000.0

    def __post_init__(self):
        object.__setattr__(self, "s0", tuple(float(v) for v in self.s0))
        object.__setattr__(self, "sensor_pt", tuple(float(v) for v in self.sensor_pt))
        positive = dict(ell1=self.ell1, ell2=self.ell2, thickness=self.thickness,
                        rho=self.rho, e1=self.e1, e2=self.e2, g=self.g, dt=self.dt)
        for name, value in positive.items():
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 < self.nu1 < 0.5:
            raise ValueError(f"nu1 must lie in (0, 0.5), got {self.nu1}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if 1.0 - self.nu1 * self.nu2 <= 0:
            raise ValueError("1 - nu1*nu2 must be positive")
        for name, (x1, x2) in (("s0", self.s0), ("sensor_pt", self.sensor_pt)):
            if not (0.0 < x1 < self.ell1 and 0.0 < x2 < self.ell2):
                raise ValueError(f"{name}={(x1, x2)} is not strictly inside the plate")
        if self.n1 < 3 or self.n2 < 3:
            raise ValueError("n1 and n2 must be >= 3")

    @property
    def nu2(self) -> float:
        return self.nu1 * self.e2 / self.e1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["s0"] = list(self.s0)
        d["sensor_pt"] = list(self.sensor_pt)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlateConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown plate fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class StiffnessCoeffs:
    d11: float
    d22: float
    d12: float
    d66: float


@dataclass(frozen=True)
class ModalSystem:
    lambdas: np.ndarray
    phi_s0: np.ndarray
    curv_sensor: np.ndarray
    force_scale: float
    num_rigid: int

    @property
    def num_modes(self) -> int:
        return len(self.lambdas)

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.sqrt(self.lambdas) / (2 * np.pi)


@dataclass(frozen=True)
class TimeSeries:
    t0: float
    dt: float
    u: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.ndim != 1 or u.shape != y.shape or len(u) < 1:
            raise ValueError("u and y must be 1-D arrays of equal nonzero length")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.u)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.u))


def derive_stiffness(cfg: PlateConfig) -> StiffnessCoeffs:
    denom = 1.0 - cfg.nu1 * cfg.nu2
    if denom <= 0:
        raise ValueError("1 - nu1*nu2 must be positive")
    h2 = cfg.thickness**2
    d11 = cfg.e1 * h2 / (12.0 * cfg.rho * denom)
    d22 = cfg.e2 * h2 / (12.0 * cfg.rho * denom)
    d66 = cfg.g * h2 / (12.0 * cfg.rho)
    return StiffnessCoeffs(d11=d11, d22=d22, d12=cfg.nu2 * d11, d66=d66)


# ---------------------------------------------------------------------------
# 1-D free-free beam basis
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def free_free_roots(count: int) -> tuple[float, ...]:
    """First ``count`` nonzero roots of ``cos(x) cosh(x) = 1``."""
    def f(x):
        return np.cos(x) - 1.0 / np.cosh(x)

    roots = []
    for m in range(1, count + 1):
        centre = (m + 0.5) * np.pi
        roots.append(optimize.brentq(f, centre - np.pi / 4, centre + np.pi / 4, xtol=1e-15))
    return tuple(roots)


def beam_basis(x, length: float, n: int, deriv: int = 0) -> np.ndarray:
    """Evaluate ``n`` L2-orthonormal free-free functions (or a derivative).

    Member 0 is the constant, member 1 the centred linear function, members
    2.. are free-free Euler-Bernoulli eigenfunctions. Returns shape
    ``(len(x), n)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((len(x), n))
    if deriv == 0:
        out[:, 0] = 1.0 / np.sqrt(length)
    if n > 1:
        c = np.sqrt(3.0 / length)
        if deriv == 0:
            out[:, 1] = c * (2.0 * x / length - 1.0)
        elif deriv == 1:
            out[:, 1] = 2.0 * c / length
    for j, bl in enumerate(free_free_roots(n - 2), start=2):
        beta = bl / length
        z = beta * x
        # sigma = (cosh bl - cos bl)/(sinh bl - sin bl); the hyperbolic terms are
        # rewritten around e^{z - bl} to avoid catastrophic cancellation.
        e = np.exp(-bl)
        denom = 1.0 - e * e - 2.0 * np.sin(bl) * e
        one_minus_sigma = 2.0 * (np.cos(bl) - np.sin(bl) - e) * e / denom
        sigma = 1.0 - one_minus_sigma
        grow = one_minus_sigma * np.exp(z)
        decay = (1.0 + sigma) * np.exp(-z)
        hyp = 0.5 * (grow + decay)       # cosh z - sigma sinh z
        hyp_d = 0.5 * (grow - decay)     # sinh z - sigma cosh z
        cz, sz = np.cos(z), np.sin(z)
        if deriv == 0:
            v = hyp + cz - sigma * sz
        elif deriv == 1:
            v = beta * (hyp_d - sz - sigma * cz)
        elif deriv == 2:
            v = beta**2 * (hyp - cz + sigma * sz)
        elif deriv == 3:
            v = beta**3 * (hyp_d + sz + sigma * cz)
        else:
            raise ValueError("deriv must be 0..3")
        out[:, j] = v / np.sqrt(length)
    return out


def default_quad_order(n: int) -> int:
    return max(2 * n + 2, 4 * n + 24)


def _gram_1d(length: float, n: int, order: int):
    """All ``int X^(p) X^(q)`` for p, q in {0, 1, 2} over [0, length]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = 0.5 * length * (nodes + 1.0)
    w = 0.5 * length * weights
    vals = [beam_basis(x, length, n, d) for d in range(3)]
    gram = {}
    for p in range(3):
        for q in range(p, 3):
            gram[p, q] = vals[p].T @ (w[:, None] * vals[q])
            gram[q, p] = gram[p, q].T
    return gram


def assemble_matrices(cfg: PlateConfig, quad_order: tuple[int, int] | None = None):
    """Mass (Gram) and stiffness matrices of the product Ritz basis.

    Basis index ``a * n2 + b`` corresponds to ``X_a(x1) Y_b(x2)``.
    """
    if quad_order is None:
        quad_order = (default_quad_order(cfg.n1), default_quad_order(cfg.n2))
    gx = _gram_1d(cfg.ell1, cfg.n1, quad_order[0])
    gy = _gram_1d(cfg.ell2, cfg.n2, quad_order[1])
    for name, gram, n in (("x1", gx, cfg.n1), ("x2", gy, cfg.n2)):
        resid = np.max(np.abs(gram[0, 0] - np.eye(n)))
        if resid > 1e-8:
            raise SimulationError(
                f"quadrature order insufficient along {name}: orthonormality residual {resid:.2e}")
    st = derive_stiffness(cfg)
    mass = np.kron(gx[0, 0], gy[0, 0])
    stiff = (st.d11 * np.kron(gx[2, 2], gy[0, 0])
             + st.d22 * np.kron(gx[0, 0], gy[2, 2])
             + st.d12 * (np.kron(gx[2, 0], gy[0, 2]) + np.kron(gx[0, 2], gy[2, 0]))
             + 4.0 * st.d66 * np.kron(gx[1, 1], gy[1, 1]))
    asym = np.max(np.abs(stiff - stiff.T)) / np.max(np.abs(stiff))
    if asym > 1e-8:
        raise SimulationError(f"stiffness matrix not symmetric (residual {asym:.2e})")
    return mass, stiff


def assemble_modal_system(cfg: PlateConfig, quad_order: tuple[int, int] | None = None,
                          expected_rigid: int | None = 3) -> ModalSystem:
    mass, stiff = assemble_matrices(cfg, quad_order)
    stiff = 0.5 * (stiff + stiff.T)
    try:
        lam, vecs = linalg.eigh(stiff, mass)
    except linalg.LinAlgError as exc:
        raise SimulationError(f"generalized eigen-solve failed: {exc}") from exc
    tol = 1e-6 * np.max(np.abs(lam))
    if np.any(lam < -tol):
        raise SimulationError(f"negative eigenvalue {lam.min():.3e} below tolerance")
    near_zero = lam < tol
    lam = np.where(near_zero, 0.0, lam)
    num_rigid = int(near_zero.sum())
    if expected_rigid is not None and num_rigid != expected_rigid:
        raise SimulationError(f"found {num_rigid} zero modes, expected {expected_rigid}")

    (a1, a2), (c1, c2) = cfg.s0, cfg.sensor_pt
    at_s0 = np.kron(beam_basis(a1, cfg.ell1, cfg.n1)[0], beam_basis(a2, cfg.ell2, cfg.n2)[0])
    curv = np.kron(beam_basis(c1, cfg.ell1, cfg.n1, 2)[0], beam_basis(c2, cfg.ell2, cfg.n2)[0])
    return ModalSystem(
        lambdas=lam,
        phi_s0=at_s0 @ vecs,
        curv_sensor=curv @ vecs,
        force_scale=1.0 / (cfg.rho * cfg.thickness),
        num_rigid=num_rigid,
    )


# ---------------------------------------------------------------------------
# Exact discretization of  q'' + alpha q' + lam q = f
# ---------------------------------------------------------------------------

def transition(lam, alpha: float, t):
    """Closed-form state transition ``exp(F t)`` for ``F = [[0, 1], [-lam, -alpha]]``.

    ``lam`` and ``t`` broadcast against each other. Returns the four entries
    ``(p11, p12, p21, p22)``.
    """
    lam, t = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(t, dtype=float))
    sig = 0.5 * alpha
    disc = lam - sig * sig
    e = np.exp(-sig * t)
    p11, p12, p21, p22 = (np.empty(lam.shape) for _ in range(4))

    rigid = lam == 0
    if np.any(rigid):
        tr = t[rigid]
        if alpha > 0:
            p12[rigid] = -np.expm1(-alpha * tr) / alpha
            p22[rigid] = np.exp(-alpha * tr)
        else:
            p12[rigid] = tr
            p22[rigid] = 1.0
        p11[rigid] = 1.0
        p21[rigid] = 0.0

    under = ~rigid & (disc >= 0)
    if np.any(under):
        wd = np.sqrt(disc[under])
        tu = t[under]
        eu = e[under]
        c = np.cos(wd * tu)
        sn = tu * np.sinc(wd * tu / np.pi)   # sin(wd t)/wd, finite at wd -> 0
        p11[under] = eu * (c + sig * sn)
        p12[under] = eu * sn
        p21[under] = -lam[under] * eu * sn
        p22[under] = eu * (c - sig * sn)

    over = ~rigid & (disc < 0)
    if np.any(over):
        gam = np.sqrt(-disc[over])
        to = t[over]
        gt = gam * to
        ch, sh = np.empty(gt.shape), np.empty(gt.shape)
        small = gt < 1.0
        eo = e[over]
        ch[small] = eo[small] * np.cosh(gt[small])
        sh[small] = eo[small] * to[small] * _sinhc(gt[small])
        big = ~small
        up = np.exp((gam[big] - sig) * to[big])
        dn = np.exp(-(gam[big] + sig) * to[big])
        ch[big] = 0.5 * (up + dn)
        sh[big] = 0.5 * (up - dn) / gam[big]
        p11[over] = ch + sig * sh
        p12[over] = sh
        p21[over] = -lam[over] * sh
        p22[over] = ch - sig * sh
    return p11, p12, p21, p22


def _sinhc(x):
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sinh(x[nz]) / x[nz]
    return out


def _input_integral(lam, alpha: float, dt: float):
    """``int_0^dt p12(tau) dtau`` per mode (the ZOH displacement gain)."""
    lam = np.asarray(lam, dtype=float)
    out = np.empty(lam.shape)
    series = lam * dt * dt < 1e-2
    if np.any(series):
        # Taylor series of the impulse response, integrated term by term.
        ls = lam[series]
        d_prev, d_cur = np.zeros_like(ls), np.ones_like(ls)
        total = np.zeros_like(ls)
        fact = 1.0
        for n in range(40):
            fact *= n + 1
            total += d_prev * dt ** (n + 1) / fact
            d_prev, d_cur = d_cur, -alpha * d_cur - ls * d_prev
        out[series] = total
    direct = ~series
    if np.any(direct):
        ld = lam[direct]
        _, p12, _, p22 = transition(ld, alpha, dt)
        out[direct] = (1.0 - p22 - alpha * p12) / ld
    return out


def discretize(lam, alpha: float, dt: float):
    """ZOH-exact ``(A, B)`` for every mode: ``A`` is ``(n, 2, 2)``, ``B`` is ``(n, 2)``."""
    lam = np.asarray(lam, dtype=float)
    p11, p12, p21, p22 = transition(lam, alpha, dt)
    a = np.stack([np.stack([p11, p12], -1), np.stack([p21, p22], -1)], -2)
    b = np.stack([_input_integral(lam, alpha, dt), p12], -1)
    return a, b


def modal_response(lambdas, alpha: float, dt: float, forcing, q0=None, v0=None):
    """Propagate independent damped oscillators under ZOH forcing.

    ``forcing`` has shape ``(N,)`` (broadcast to every mode) or ``(N, n_modes)``.
    ``forcing[n]`` is held over ``[t_n, t_{n+1})``. Returns displacement and
    velocity, each ``(N, n_modes)``, with row 0 equal to the initial state.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    nm = len(lambdas)
    forcing = np.asarray(forcing, dtype=float)
    if forcing.ndim == 1:
        forcing = np.broadcast_to(forcing[:, None], (len(forcing), nm))
    n = forcing.shape[0]
    a, b = discretize(lambdas, alpha, dt)
    det = np.exp(-alpha * dt)
    q = np.empty((n, nm))
    v = np.empty((n, nm))
    for k in range(nm):
        (a11, a12), (a21, a22) = a[k]
        b0, b1 = b[k]
        den = [1.0, -(a11 + a22), det]
        f = forcing[:, k]
        if np.any(f):
            q[:, k] = signal.lfilter([0.0, b0, a12 * b1 - a22 * b0], den, f)
            v[:, k] = signal.lfilter([0.0, b1, a21 * b0 - a11 * b1], den, f)
        else:
            q[:, k] = 0.0
            v[:, k] = 0.0
    if q0 is not None or v0 is not None:
        q0 = np.zeros(nm) if q0 is None else np.asarray(q0, dtype=float)
        v0 = np.zeros(nm) if v0 is None else np.asarray(v0, dtype=float)
        tgrid = dt * np.arange(n)[:, None]
        p11, p12, p21, p22 = transition(lambdas[None, :], alpha, tgrid)
        q += p11 * q0 + p12 * v0
        v += p21 * q0 + p22 * v0
    return q, v


def simulate(sys: ModalSystem, cfg: PlateConfig, u, q0=None, v0=None, t0: float = 0.0) -> TimeSeries:
    """Sensor output ``y = gain_k * sum_k curv_k q_k`` for input samples ``u``."""
    u = np.asarray(u, dtype=float)
    forcing = np.outer(u, sys.phi_s0 * sys.force_scale)
    q, _ = modal_response(sys.lambdas, cfg.alpha, cfg.dt, forcing, q0, v0)
    y = cfg.gain_k * (q @ sys.curv_sensor)
    if not np.all(np.isfinite(y)):
        raise SimulationError("non-finite response; check stiffness scaling and dt")
    return TimeSeries(t0=t0, dt=cfg.dt, u=u, y=y)


# ---------------------------------------------------------------------------
# Excitation and sensor
# ---------------------------------------------------------------------------

def pulse_train(amplitude: float, period: float, duration_samples: int, total_samples: int,
                dt: float, amplitude_decades: float = 0.0, seed: int | None = None) -> np.ndarray:
    """Rectangular pulses of ``duration_samples`` every ``period`` seconds.

    The first onset sits at ``period / 2``. With ``amplitude_decades > 0`` each
    pulse is scaled by ``10**(-amplitude_decades * U)``, ``U ~ Uniform[0, 1)``
    drawn from ``seed``, so amplitudes spread log-uniformly below ``amplitude``.
    """
    if not period > dt:
        raise ValueError("period must exceed dt")
    if duration_samples < 1:
        raise ValueError("duration_samples must be >= 1")
    if not amplitude_decades >= 0.0:
        raise ValueError("amplitude_decades must be >= 0")
    u = np.zeros(int(total_samples))
    onsets = []
    k = 0
    while True:
        idx = int(round((0.5 + k) * period / dt))
        if idx >= total_samples:
            break
        onsets.append(idx)
        k += 1
    amps = np.full(len(onsets), float(amplitude))
    if amplitude_decades > 0 and onsets:
        rng = np.random.default_rng(seed)
        amps *= 10.0 ** (-amplitude_decades * rng.random(len(onsets)))
    for idx, a in zip(onsets, amps):
        u[idx:idx + duration_samples] = a
    return u


NONLINEARITIES = ("none", "cubic", "saturation")


def apply_sensor_nonlinearity(y, kind: str = "none", eps: float = 0.0, scale: float = 1.0) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if kind == "none":
        return y
    if kind == "cubic":
        if not np.isfinite(eps):
            raise ValueError("eps must be finite")
        return y + eps * y**3
    if kind == "saturation":
        if not (np.isfinite(scale) and scale > 0):
            raise ValueError("saturation scale must be positive")
        return scale * np.tanh(y / scale)
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


@dataclass(frozen=True)
class Excitation:
    """Pulse-train and sensor settings for :func:`synthesize`.

    ``amplitude=None`` rescales the pulses so the linear response peaks at
    ``|y| = 1``. For saturation, ``scale = scale_factor * std(linear y)``.
    """

    duration_s: float = 60.0
    period: float = 2.0
    duration_samples: int = 1
    amplitude: float | None = None
    amplitude_decades: float = 0.0
    seed: int = 0
    nonlinearity: str = "saturation"
    scale_factor: float = 1.5
    eps: float = 0.0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.duration_samples < 1:
            raise ValueError("duration_samples must be >= 1")
        if not self.amplitude_decades >= 0:
            raise ValueError("amplitude_decades must be >= 0")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITIES}")
        if not self.scale_factor > 0:
            raise ValueError("scale_factor must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Excitation":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown excitation fields: {sorted(unknown)}")
        return cls(**d)


def synthesize(cfg: PlateConfig, exc: Excitation, sys: ModalSystem | None = None) -> TimeSeries:
    """Full dataset generation: assemble, excite, simulate, apply the sensor map."""
    if sys is None:
        sys = assemble_modal_system(cfg)
    n = int(round(exc.duration_s / cfg.dt))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    u = pulse_train(1.0, exc.period, exc.duration_samples, n, cfg.dt,
                    exc.amplitude_decades, exc.seed)
    lin = simulate(sys, cfg, u)
    if exc.amplitude is None:
        peak = np.max(np.abs(lin.y))
        amp = 1.0 / peak if peak > 0 else 1.0
    else:
        amp = float(exc.amplitude)
    u = amp * u
    y_lin = amp * lin.y
    scale = exc.scale_factor * float(np.std(y_lin))
    if exc.nonlinearity == "saturation":
        y = apply_sensor_nonlinearity(y_lin, "saturation", scale=scale)
    else:
        y = apply_sensor_nonlinearity(y_lin, exc.nonlinearity, eps=exc.eps)
    meta = {
        "num_modes": sys.num_modes,
        "num_rigid": sys.num_rigid,
        "lambdas": sys.lambdas.tolist(),
        "pulse_amplitude": amp,
        "nonlinearity": exc.nonlinearity,
        "saturation_scale": scale if exc.nonlinearity == "saturation" else None,
    }
    return TimeSeries(t0=0.0, dt=cfg.dt, u=u, y=y, meta=meta)
