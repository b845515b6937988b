"""Inner maximization: adversarial perturbation of inputs by penalized
gradient ascent, with the accumulated trace used for the weight gradient.

Per sample the ascent climbs ``l(theta; xhat, y) - lam * c_w(xhat, x)``
with a fixed step and monotone acceptance: a candidate that decreases the
penalized objective is rejected and the state kept. Steps are explicit on
the loss term and implicit on the quadratic penalty (same fixed points,
stable for arbitrarily large weights, so high-weight coordinates stay
pinned at their inputs). Targets are never perturbed. The trace
accumulates

    -2 * eps_x * lam * sum_{t < k} (X_A^t - X)

entrywise over the pre-step states, the running approximation of how the
perturbed inputs respond to the covariate weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cost import CovariateWeights, cost_x
from .errors import DivergenceError
from .models import EnvDataset, LossSpec, ModelParams, batch_losses

# perturbations beyond this multiple of the data scale signal a divergent
# ascent (lam too small relative to the loss curvature)
DIVERGENCE_FACTOR = 1e6


@dataclass
class AdvConfig:
    """Inner-maximization hyperparameters."""

    lam: float = 1.0
    eps_x: float = 0.05
    ascent_steps: int = 5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.eps_x <= 0:
            raise ValueError("eps_x must be > 0")
        if self.ascent_steps < 0:
            raise ValueError("ascent_steps must be >= 0")


@dataclass
class AdversarialState:
    """Perturbed inputs plus the accumulated weight-response trace."""

    X_A: np.ndarray
    trace_dXA_dw: np.ndarray
    steps_taken: int


def ascend(
    params: ModelParams,
    spec: LossSpec,
    w: CovariateWeights,
    data: EnvDataset,
    cfg: AdvConfig,
) -> AdversarialState:
    """Run exactly cfg.ascent_steps accepted-or-rejected ascent steps per sample."""
    if data.dim != params.dim or data.dim != w.dim:
        raise ValueError("dimension mismatch between data, params, and weights")
    if cfg.ascent_steps == 0 or not math.isfinite(cfg.lam):
        # identity state; an infinite penalty admits no perturbation at all
        return AdversarialState(data.X.copy(), np.zeros_like(data.X), cfg.ascent_steps)
    scale_cap = DIVERGENCE_FACTOR * max(1.0, float(np.max(np.abs(data.X))))
    XA, presum, status = _kernels.ascend_batch(
        data.X,
        data.y,
        params.theta,
        params.intercept or 0.0,
        w.w,
        spec.code,
        cfg.lam,
        cfg.eps_x,
        cfg.ascent_steps,
        scale_cap,
    )
    if status == 1:
        raise DivergenceError("non-finite value during adversarial ascent")
    if status == 2:
        raise DivergenceError(
            "adversarial perturbation exceeded {:g} x data scale; lam is too small "
            "for this loss curvature".format(DIVERGENCE_FACTOR)
        )
    trace = -2.0 * cfg.eps_x * cfg.lam * presum
    return AdversarialState(XA, trace, cfg.ascent_steps)


def surrogate_loss(
    params: ModelParams,
    spec: LossSpec,
    w: CovariateWeights,
    data: EnvDataset,
    cfg: AdvConfig,
) -> float:
    """Mean per-sample loss at the ascended inputs."""
    state = ascend(params, spec, w, data, cfg)
    return float(np.mean(batch_losses(params, spec, state.X_A, data.y)))


def s_lambda(
    params: ModelParams,
    spec: LossSpec,
    w: CovariateWeights,
    x: np.ndarray,
    y: float,
    cfg: AdvConfig,
) -> float:
    """Penalized supremum surrogate for a single sample.

    Returns l(theta; xhat, y) - lam * c_w(xhat, x) at the ascended xhat.
    Monotone acceptance starts from the unperturbed point, so the result
    never drops below the plain loss.
    """
    data = EnvDataset(np.asarray(x, dtype=np.float64)[None, :], np.array([y]), env_id=0)
    state = ascend(params, spec, w, data, cfg)
    xhat = state.X_A[0]
    val = float(batch_losses(params, spec, state.X_A, data.y)[0])
    if math.isfinite(cfg.lam):
        val -= cfg.lam * cost_x(w, xhat, data.X[0])
    return val
