"""Prediction error metrics."""

from __future__ import annotations

import numpy as np


class MetricsError(ValueError):
    pass


def _check(pred, truth):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise MetricsError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise MetricsError("empty input")
    return p, t


def mse(pred, truth) -> float:
    p, t = _check(pred, truth)
    e = p - t
    return float(np.mean(e * e))


def rmse(pred, truth) -> float:
    return float(np.sqrt(mse(pred, truth)))


def mae(pred, truth) -> float:
    p, t = _check(pred, truth)
    return float(np.mean(np.abs(p - t)))
