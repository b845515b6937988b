"""Pure-NumPy gradient-ascent kernel (fallback for the compiled version).

Semantics are shared with the Cython kernel in ``_ascent_cy.pyx``: per
sample, run ``steps`` fixed-step ascent updates on the penalized objective

    l(theta; xhat, y) - lam * sum_j w_j^2 (xhat_j - x_j)^2

with monotone acceptance (a candidate that decreases the objective is
rejected and the state kept). Each step is explicit on the loss term and
implicit (exact proximal pull-back) on the quadratic penalty:

    xhat_j <- x_j + (xhat_j + eps * dl/dxhat_j - x_j) / (1 + 2 eps lam w_j^2)

which has the same fixed points as plain explicit ascent but stays stable
for arbitrarily large weights, so heavily weighted coordinates are pinned
instead of oscillating. Before each step the current offset ``xhat - x``
is added into ``presum``; the caller scales that sum into the
weight-gradient trace.

Returns (XA, presum, status) with status 0 = ok, 1 = non-finite value
encountered, 2 = perturbation norm exceeded ``scale_cap``.
"""
from __future__ import annotations

import numpy as np

KERNEL_NAME = "python"


def _losses(code: int, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if code == 0:
        return (y - z) ** 2
    if code == 1:
        return np.abs(y - z)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z


def _dloss_dz(code: int, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if code == 0:
        return -2.0 * (y - z)
    if code == 1:
        return -np.sign(y - z)
    return 0.5 * (1.0 + np.tanh(0.5 * z)) - y


def ascend_batch(X, y, theta, intercept, w, loss_code, lam, eps_x, steps, scale_cap):
    X = np.asarray(X, dtype=np.float64)
    XA = X.copy()
    presum = np.zeros_like(X)
    if steps == 0:
        return XA, presum, 0
    w2 = w * w
    damp = 1.0 / (1.0 + 2.0 * eps_x * lam * w2)
    z = XA @ theta + intercept
    obj = _losses(loss_code, z, y)  # offset is zero at the start
    for _ in range(steps):
        presum += XA - X
        g = _dloss_dz(loss_code, z, y)[:, None] * theta[None, :]
        cand = X + (XA + eps_x * g - X) * damp
        diff = cand - X
        cand_obj = _losses(loss_code, cand @ theta + intercept, y) - lam * ((diff * diff) @ w2)
        if not np.all(np.isfinite(cand_obj)):
            return XA, presum, 1
        accept = cand_obj >= obj
        XA = np.where(accept[:, None], cand, XA)
        obj = np.where(accept, cand_obj, obj)
        if np.max(np.abs(XA - X)) > scale_cap:
            return XA, presum, 2
        z = XA @ theta + intercept
    return XA, presum, 0
