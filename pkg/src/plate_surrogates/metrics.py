"""Scalar scores shared by the trainer and the evaluator."""

from __future__ import annotations

import numpy as np


def mse(y_ref, y_pred) -> float:
    y_ref = np.asarray(y_ref, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_ref.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {y_ref.shape} vs {y_pred.shape}")
    if y_ref.size == 0:
        raise ValueError("empty input")
    r = y_ref - y_pred
    return float(np.mean(r * r))


def r2_score(y_ref, y_pred) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``.

    ``SS_tot`` is taken about the mean of ``y_ref``. Raises ``ValueError``
    for fewer than two samples or a constant reference.
    """
    y_ref = np.asarray(y_ref, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_ref.shape != y_pred.shape:
        raise ValueError(f"length mismatch {y_ref.size} vs {y_pred.size}")
    if y_ref.size < 2:
        raise ValueError("need at least two samples")
    dev = y_ref - y_ref.mean()
    ss_tot = float(dev @ dev)
    if ss_tot == 0.0:
        raise ValueError("reference has zero variance; R^2 is undefined")
    res = y_ref - y_pred
    return 1.0 - float(res @ res) / ss_tot
