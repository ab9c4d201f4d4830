"""Mini-batch Adam training with early stopping on the validation loss."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import NormStats, WindowedDataset
from .metrics import mse, r2_score
from .models import Model, ModelSpec
from .nn_core import DivergenceError, adam_step, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

TRACE_HEADER = ("epoch", "train_loss", "val_loss")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 500
    patience: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    clip_norm: float | None = None  # off unless set

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive when given")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Checkpoint:
    """Best-validation parameters of one run plus its loss trace.

    Losses in ``trace`` are in the units of the raw output signal (the
    normalized MSE times ``y_std**2``).
    """

    spec: ModelSpec
    theta: np.ndarray
    norm_stats: NormStats | None
    seed: int
    best_epoch: int
    stop_reason: str
    trace: list = field(default_factory=list)

    @property
    def model(self) -> Model:
        return Model.from_theta(self.spec, self.theta)

    @property
    def best_val_loss(self) -> float:
        return self.trace[self.best_epoch - 1][2]

    def save(self, path) -> None:
        save_checkpoint(path, self.spec.to_dict(), self.theta,
                        self.norm_stats.to_dict() if self.norm_stats else None, self.seed,
                        extra=dict(best_epoch=self.best_epoch, stop_reason=self.stop_reason,
                                   trace=[list(r) for r in self.trace]))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        doc = load_checkpoint(path)
        extra = doc.get("extra", {})
        stats = doc.get("norm_stats")
        spec = ModelSpec.from_dict(doc["spec"])
        theta = doc["theta"]
        Model.from_theta(spec, theta)  # size check
        return cls(spec=spec, theta=theta, norm_stats=NormStats(**stats) if stats else None,
                   seed=doc["seed"], best_epoch=int(extra.get("best_epoch", 0)),
                   stop_reason=extra.get("stop_reason", ""),
                   trace=[tuple(r) for r in extra.get("trace", [])])


def write_trace(trace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for epoch, tr, va in trace:
            w.writerow([epoch, repr(float(tr)), repr(float(va))])


def mse_loss(model: Model, X, y) -> float:
    """Batch MSE of ``model``; the averaged gradient lands in ``model.store.grad``."""
    if len(y) == 0:
        raise ValueError("empty batch")
    loss = model.loss_and_grad(X, y)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    return loss


def _loss_scale(ds: WindowedDataset) -> float:
    return 1.0 if ds.norm_stats is None else ds.norm_stats.y_std ** 2


def train(spec: ModelSpec, ds: WindowedDataset, cfg: TrainConfig = TrainConfig()) -> Checkpoint:
    """Train one model; returns the best-validation snapshot.

    Each epoch visits every training pair once in batches of
    ``cfg.batch_size`` (reshuffled per epoch when ``cfg.shuffle``), then
    scores the whole validation block. Training stops after ``patience``
    epochs without a strict validation improvement. The reported training
    loss is the pair-weighted mean of the batch losses seen during the epoch.

    A non-finite loss or gradient raises :class:`DivergenceError` carrying
    the trace so far as ``exc.trace``.
    """
    if ds.split_bounds is None:
        raise ValueError("dataset must be split before training")
    if spec.s != ds.s:
        raise ValueError(f"model window s={spec.s} does not match dataset s={ds.s}")
    spec = replace(spec, seed=cfg.seed)
    model = Model(spec)
    store = model.store
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    scale = _loss_scale(ds)
    tr = ds.pair_range("train")
    pairs = np.arange(tr.start, tr.stop)
    X_val, y_val = ds.split_arrays("val")

    trace = []
    best_val, best_theta, best_epoch, wait = math.inf, store.theta.copy(), 0, 0
    stop_reason = "max_epochs"
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(pairs) if cfg.shuffle else pairs
            total = 0.0
            for a in range(0, len(order), cfg.batch_size):
                idx = order[a:a + cfg.batch_size]
                X, y = ds.batch(idx)
                total += mse_loss(model, X, y) * len(idx)
                if cfg.clip_norm is not None:
                    norm = float(np.linalg.norm(store.grad))
                    if norm > cfg.clip_norm:
                        store.grad *= cfg.clip_norm / norm
                adam_step(store, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            train_loss = total / len(order) * scale
            val_loss = mse(y_val, model.predict(X_val)) * scale
            trace.append((epoch, train_loss, val_loss))
            if not math.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            log.debug("%s epoch %d train %.6g val %.6g", spec.label, epoch, train_loss, val_loss)
            if val_loss < best_val:
                best_val, best_epoch, wait = val_loss, epoch, 0
                best_theta[:] = store.theta
            else:
                wait += 1
                if wait >= cfg.patience:
                    stop_reason = "patience"
                    break
    except (DivergenceError, FloatingPointError) as exc:
        err = DivergenceError(f"{spec.label} seed {cfg.seed}: {exc}")
        err.trace = trace
        raise err from exc
    return Checkpoint(spec=spec, theta=best_theta, norm_stats=ds.norm_stats, seed=cfg.seed,
                      best_epoch=best_epoch, stop_reason=stop_reason, trace=trace)


@dataclass
class RunRecord:
    """One seeded run: its checkpoint and de-normalized R² scores, or the error."""

    run: int
    seed: int
    checkpoint: Checkpoint | None = None
    train_r2: float = math.nan
    test_r2: float = math.nan
    error: str | None = None
    cpu_seconds: float = 0.0
    wall_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def score(ckpt: Checkpoint, ds: WindowedDataset, split: str) -> float:
    X, y = ds.split_arrays(split)
    pred = ckpt.model.predict(X)
    stats = ds.norm_stats
    if stats is not None:
        y, pred = stats.denormalize_y(y), stats.denormalize_y(pred)
    return r2_score(y, pred)


def train_one(spec: ModelSpec, ds: WindowedDataset, cfg: TrainConfig, run: int) -> RunRecord:
    """Run number ``run`` of a repeat set, seeded ``cfg.seed + run``.

    Never raises for training or scoring failures: the error is recorded
    instead. A run that trained but cannot be scored (e.g. constant targets)
    keeps its checkpoint.
    """
    seed = cfg.seed + run
    try:
        ckpt = train(spec, ds, replace(cfg, seed=seed))
    except (DivergenceError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("%s run %d (seed %d) failed: %s", spec.label, run, seed, exc)
        return RunRecord(run=run, seed=seed, error=f"{type(exc).__name__}: {exc}")
    rec = RunRecord(run=run, seed=seed, checkpoint=ckpt)
    try:
        rec.train_r2, rec.test_r2 = score(ckpt, ds, "train"), score(ckpt, ds, "test")
        if not (math.isfinite(rec.train_r2) and math.isfinite(rec.test_r2)):
            raise ValueError("non-finite R^2")
    except ValueError as exc:
        rec.error = f"scoring: {exc}"
    return rec


def run_repeats(spec: ModelSpec, ds: WindowedDataset, cfg: TrainConfig = TrainConfig(),
                n_runs: int = 3) -> list[RunRecord]:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    return [train_one(spec, ds, cfg, run) for run in range(n_runs)]
