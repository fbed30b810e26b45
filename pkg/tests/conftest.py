"""Shared test helpers."""

from __future__ import annotations

import numpy as np


def central_difference(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] = x[i] + h
        f_plus = func(bumped)
        bumped[i] = x[i] - h
        f_minus = func(bumped)
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Scale-aware gradient error: ||a - n|| / max(||n||, 1)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(float(np.linalg.norm(numeric)), 1.0)
    return float(np.linalg.norm(analytic - numeric)) / denom
