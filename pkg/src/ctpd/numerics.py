"""Numerically stable scalar/vector primitives used by the loss machinery.

Losses are evaluated at float64; softplus is log1p-based and sigmoid is
computed branch-wise so margins beyond +-700 neither overflow nor underflow
to garbage.
"""

from __future__ import annotations

import math

import numpy as np


def sigmoid(x: float) -> float:
    """Logistic sigma(x), stable for any finite x."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def softplus(x: float) -> float:
    """log(1 + e^x) without overflow; equals x + softplus(-x) for large x."""
    if x > 40.0:
        # e^-x below double rounding of x; adding it is a no-op past ~36
        return x + math.exp(-x) if x < 745.0 else x
    if x < -745.0:
        return 0.0
    return math.log1p(math.exp(x))


def log_sigmoid(x: float) -> float:
    """log sigma(x) = -softplus(-x)."""
    return -softplus(-x)


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    """Vectorized stable sigmoid."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus_np(x: np.ndarray) -> np.ndarray:
    """Vectorized stable softplus."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x > 40.0
    lo = x < -745.0
    mid = ~(hi | lo)
    out[hi] = x[hi] + np.exp(-np.minimum(x[hi], 745.0))
    out[lo] = 0.0
    out[mid] = np.log1p(np.exp(x[mid]))
    return out


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max-shift; rows must be finite."""
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return z - lse


def clamp(x: float, lo: float, hi: float) -> float:
    """Clamp x into [lo, hi]."""
    return lo if x < lo else hi if x > hi else x
