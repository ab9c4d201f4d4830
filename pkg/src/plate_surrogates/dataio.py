"""CSV ingestion, prefix trimming, sliding windows and chronological splits."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .plate_sim import TimeSeries

CSV_HEADER = "t,u,y"
CACHE_MAGIC = b"PSWIN\x00"
CACHE_VERSION = 1
DEFAULT_FRACTIONS = (0.64, 0.16, 0.20)


def save_csv(series: TimeSeries, path) -> None:
    data = np.column_stack([series.t, series.u, series.y])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=CSV_HEADER, comments="")


def load_csv(path, jitter_tol: float = 1e-6) -> TimeSeries:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != CSV_HEADER:
            raise ValueError(f"{path}: expected header {CSV_HEADER!r}, got {header!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in {line.strip()!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    t = data[:, 0]
    if len(t) == 1:
        raise ValueError(f"{path}: cannot infer dt from a single row")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ValueError(f"{path}: time column is not strictly increasing")
    dt = float(np.median(steps))
    if np.max(np.abs(steps - dt)) > jitter_tol * dt:
        raise ValueError(f"{path}: sampling step is not constant (relative jitter > {jitter_tol})")
    return TimeSeries(t0=float(t[0]), dt=dt, u=data[:, 1], y=data[:, 2])


def trim_prefix(series: TimeSeries, threshold: float = 0.0) -> TimeSeries:
    """Drop every sample before the first one with ``|u| > threshold``."""
    active = np.flatnonzero(np.abs(series.u) > threshold)
    if active.size == 0:
        raise ValueError("input signal never exceeds the threshold; no impulse found")
    k = int(active[0])
    return TimeSeries(t0=series.t0 + k * series.dt, dt=series.dt,
                      u=series.u[k:], y=series.y[k:], meta=dict(series.meta))


@dataclass(frozen=True)
class NormStats:
    u_mean: float = 0.0
    u_std: float = 1.0
    y_mean: float = 0.0
    y_std: float = 1.0

    def denormalize_y(self, y):
        return np.asarray(y) * self.y_std + self.y_mean

    def to_dict(self):
        return dict(u_mean=self.u_mean, u_std=self.u_std, y_mean=self.y_mean, y_std=self.y_std)


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised pairs built from one series.

    Pair ``i`` has target ``y[s - 1 + i]`` and input window
    ``(u[k], u[k-1], ..., u[k-s+1])`` with ``k = s - 1 + i`` (newest first).
    ``split_bounds`` are sample indices ``(n_train, n_train + n_val)``
    delimiting the chronological train / val / test blocks; a pair belongs
    to the block that contains its target.
    """

    s: int
    u: np.ndarray
    y: np.ndarray
    dt: float = 1.0
    t0: float = 0.0
    split_bounds: tuple[int, int] | None = None
    norm_stats: NormStats | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def num_samples(self) -> int:
        return len(self.u)

    @property
    def num_pairs(self) -> int:
        return len(self.u) - self.s + 1

    @property
    def inputs(self) -> np.ndarray:
        """All windows as a read-only ``(num_pairs, s)`` view."""
        return sliding_window_view(self.u, self.s)[:, ::-1]

    @property
    def targets(self) -> np.ndarray:
        return self.y[self.s - 1:]

    @property
    def target_index(self) -> np.ndarray:
        return np.arange(self.s - 1, len(self.u))

    def pair_range(self, split: str) -> range:
        """Pair indices whose targets fall in ``split`` (train / val / test / all)."""
        if split == "all":
            return range(self.num_pairs)
        if self.split_bounds is None:
            raise ValueError("dataset has not been split")
        a, b = self.split_bounds
        lo, hi = {"train": (0, a), "val": (a, b), "test": (b, len(self.u))}[split]
        first = max(lo, self.s - 1) - (self.s - 1)
        last = hi - (self.s - 1)
        return range(first, max(first, last))

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx)
        return self.inputs[idx], self.targets[idx]

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        r = self.pair_range(split)
        return self.inputs[r.start:r.stop], self.targets[r.start:r.stop]

    def raw_targets(self, split: str) -> np.ndarray:
        """Targets of ``split`` in the original (de-normalized) units."""
        _, y = self.split_arrays(split)
        return y if self.norm_stats is None else self.norm_stats.denormalize_y(y)


def make_windows(series: TimeSeries, s: int) -> WindowedDataset:
    s = int(s)
    if s < 1:
        raise ValueError("window length must be >= 1")
    if len(series) < s:
        raise ValueError(f"series of length {len(series)} is shorter than window {s}")
    return WindowedDataset(s=s, u=np.ascontiguousarray(series.u), y=np.ascontiguousarray(series.y),
                           dt=series.dt, t0=series.t0)


def split_counts(n: int, fractions=DEFAULT_FRACTIONS, rule: str = "floor") -> tuple[int, int, int]:
    """Block sizes for a chronological train / val / test partition of ``n`` items.

    ``floor``: train and val are ``floor(f * n)``, the remainder goes to test.
    ``holdout``: test is ``round(f_test * n)`` first, then val is
    ``round(f_val * rest)`` of what is left; this is the nested rule that
    reproduces the block sizes quoted for the plate recordings.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    if rule == "floor":
        n_train = math.floor(fr[0] * n + 1e-9)
        n_val = math.floor(fr[1] * n + 1e-9)
        n_test = n - n_train - n_val
    elif rule == "holdout":
        n_test = math.floor(fr[2] * n + 0.5)
        n_val = math.floor(fr[1] * (n - n_test) + 0.5)
        n_train = n - n_test - n_val
    else:
        raise ValueError(f"unknown split rule {rule!r}")
    return n_train, n_val, n_test


def chronological_split(ds: WindowedDataset, fractions=DEFAULT_FRACTIONS,
                        rule: str = "floor") -> WindowedDataset:
    """Partition the target samples into contiguous train -> val -> test blocks.

    Boundaries are placed on series samples; windows of later blocks may read
    input history from earlier blocks, but no target is shared.
    """
    n_train, n_val, n_test = split_counts(ds.num_samples, fractions, rule)
    out = replace(ds, split_bounds=(n_train, n_train + n_val))
    for name in ("train", "val", "test"):
        if len(out.pair_range(name)) == 0:
            raise ValueError(f"{name} block is empty (sizes {n_train}/{n_val}/{n_test}, s={ds.s})")
    return out


def normalize(ds: WindowedDataset) -> WindowedDataset:
    """Standardize u and y with statistics from the training block only."""
    if ds.split_bounds is None:
        raise ValueError("split the dataset before normalizing")
    if ds.norm_stats is not None:
        raise ValueError("dataset is already normalized")
    n_train = ds.split_bounds[0]
    r = ds.pair_range("train")
    u_tr = ds.u[:n_train]
    y_tr = ds.targets[r.start:r.stop]
    if len(y_tr) == 0:
        raise ValueError("training block is empty")
    u_std, y_std = float(np.std(u_tr)), float(np.std(y_tr))
    if u_std == 0 or y_std == 0:
        raise ValueError("zero variance in training block; cannot normalize")
    stats = NormStats(float(np.mean(u_tr)), u_std, float(np.mean(y_tr)), y_std)
    return replace(ds, u=(ds.u - stats.u_mean) / stats.u_std,
                   y=(ds.y - stats.y_mean) / stats.y_std, norm_stats=stats)


def apply_norm(ds: WindowedDataset, stats: NormStats) -> WindowedDataset:
    """Standardize with given statistics, e.g. those stored in a checkpoint."""
    if ds.norm_stats is not None:
        raise ValueError("dataset is already normalized")
    return replace(ds, u=(ds.u - stats.u_mean) / stats.u_std,
                   y=(ds.y - stats.y_mean) / stats.y_std, norm_stats=stats)


def denormalize(ds: WindowedDataset, y):
    return y if ds.norm_stats is None else ds.norm_stats.denormalize_y(y)


def prepare(series: TimeSeries, s: int, fractions=DEFAULT_FRACTIONS, rule: str = "floor",
            standardize: bool = True, trim: bool = True, threshold: float = 0.0) -> WindowedDataset:
    """trim -> windows -> split -> (normalize) in one call."""
    if trim:
        series = trim_prefix(series, threshold)
    ds = chronological_split(make_windows(series, s), fractions, rule)
    return normalize(ds) if standardize else ds


# ---------------------------------------------------------------------------
# Binary cache
#
# Layout: 6-byte magic "PSWIN\0", uint16 version, uint32 header length, UTF-8
# JSON header, then the float64 little-endian u and y arrays back to back.
# Windows are views of u and are rebuilt on load.
# ---------------------------------------------------------------------------

def _header(ds: WindowedDataset) -> dict:
    return {
        "s": ds.s,
        "num_samples": ds.num_samples,
        "dt": ds.dt,
        "t0": ds.t0,
        "split_bounds": list(ds.split_bounds) if ds.split_bounds else None,
        "norm_stats": ds.norm_stats.to_dict() if ds.norm_stats else None,
    }


def save_cache(ds: WindowedDataset, path) -> Path:
    path = Path(path)
    header = json.dumps(_header(ds), sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HI", CACHE_VERSION, len(header)))
        fh.write(header)
        fh.write(np.asarray(ds.u, dtype="<f8").tobytes())
        fh.write(np.asarray(ds.y, dtype="<f8").tobytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(_header(ds), indent=2, sort_keys=True) + "\n")
    return sidecar


def load_cache(path) -> WindowedDataset:
    raw = Path(path).read_bytes()
    if raw[:6] != CACHE_MAGIC:
        raise ValueError("not a window cache (bad magic)")
    version, hlen = struct.unpack("<HI", raw[6:12])
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported cache version {version}")
    header = json.loads(raw[12:12 + hlen])
    n = header["num_samples"]
    body = np.frombuffer(raw[12 + hlen:], dtype="<f8")
    if body.size != 2 * n:
        raise ValueError("truncated cache body")
    stats = header["norm_stats"]
    bounds = header["split_bounds"]
    return WindowedDataset(
        s=header["s"], u=body[:n].astype(float), y=body[n:].astype(float),
        dt=header["dt"], t0=header["t0"],
        split_bounds=tuple(bounds) if bounds else None,
        norm_stats=NormStats(**stats) if stats else None,
    )
