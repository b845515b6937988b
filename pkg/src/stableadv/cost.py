"""Weighted transportation cost and the covariate-weight space.

The weight space W contains vectors with every entry >= 1 and minimum
entry exactly 1. Larger weights make mass movement along that coordinate
expensive; the floor at 1 keeps at least one coordinate at the base cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

W_TOL = 1e-9


@dataclass
class CovariateWeights:
    """A point of the weight space W (entrywise >= 1, min entry == 1)."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError("w must be a 1-D vector")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("w entries must be finite")
        if abs(float(np.min(self.w)) - 1.0) > W_TOL:
            raise ValueError("w must have all entries >= 1 with min entry exactly 1")

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def ones(cls, m: int) -> "CovariateWeights":
        return cls(np.ones(m))


def as_weight_vector(w) -> np.ndarray:
    """Accept a CovariateWeights or a raw vector (the cost formulas are
    well-defined off the constraint set too)."""
    return w.w if isinstance(w, CovariateWeights) else np.asarray(w, dtype=np.float64)


def _check_dims(w: np.ndarray, *vecs: np.ndarray) -> list[np.ndarray]:
    out = []
    for v in vecs:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != w.shape:
            raise ValueError(f"dimension mismatch: {v.shape} vs {w.shape}")
        out.append(v)
    return out


def cost(w, x1, x2, y1: float, y2: float) -> float:
    """Weighted squared transport cost sum_i (w_i (x1_i - x2_i))^2.

    Label mismatch returns the +inf sentinel: mass never moves across
    labels. The sentinel is a literal math.inf, never an overflow product.
    """
    wv = as_weight_vector(w)
    x1, x2 = _check_dims(wv, x1, x2)
    if y1 != y2:
        return math.inf
    d = wv * (x1 - x2)
    return float(d @ d)


def cost_x(w, x1, x2) -> float:
    """Covariate part of the cost (labels equal by construction)."""
    wv = as_weight_vector(w)
    x1, x2 = _check_dims(wv, x1, x2)
    d = wv * (x1 - x2)
    return float(d @ d)


def cost_grad_xhat(w, xhat, x) -> np.ndarray:
    """Gradient of cost w.r.t. its first argument: 2 w^2 (xhat - x)."""
    wv = as_weight_vector(w)
    xhat, x = _check_dims(wv, xhat, x)
    return 2.0 * wv * wv * (xhat - x)


def project(w_raw) -> CovariateWeights:
    """Project a raw vector onto W.

    Two steps: clamp every entry to [1, inf), then subtract
    (min entry - 1) from all entries. Preserves entrywise ordering,
    enforces both constraints, and is idempotent; vectors already in W
    pass through unchanged.
    """
    w = np.asarray(w_raw, dtype=np.float64)
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise ValueError("projection input must be a finite 1-D vector")
    w = np.maximum(w, 1.0)
    w = w - (w.min() - 1.0)
    return CovariateWeights(w)
