"""Alternating optimization of model parameters and covariate weights.

Each outer iteration runs T_theta full-batch descent steps on the pooled
adversarial surrogate (a fresh ascent precedes every step), evaluates the
cross-environment objective

    R = mean_e L^e + alpha * (max_e L^e - min_e L^e)

on clean data, and takes T_w projected descent steps on the covariate
weights along the chained gradient approximation

    dR/dw = (dR/dtheta) (dtheta/dX_A) (dX_A/dw)

whose middle and right factors are running sums accumulated during the
descent and ascent passes. Weights start at all-ones and are projected
back onto W after every update. The whole loop is deterministic: there is
no randomness anywhere in training (parameters initialize at zero).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .adversary import AdvConfig, ascend
from .cost import CovariateWeights, project
from .errors import DivergenceError
from .models import (
    EnvDataset,
    LossSpec,
    ModelParams,
    batch_grad_theta,
    batch_losses,
    batch_mixed_grad,
    pool_envs,
)


@dataclass
class SALConfig:
    """Hyperparameters of the alternating loop.

    outer_iters, theta_iters, w_iters and ascent_steps are the four loop
    counts; eps_x/eps_theta/eps_w the fixed step sizes (no decay); lam the
    Lagrangian penalty multiplier; alpha the mean-vs-spread tradeoff of R.
    """

    outer_iters: int = 20
    theta_iters: int = 50
    w_iters: int = 1
    ascent_steps: int = 5
    eps_x: float = 0.05
    eps_theta: float = 0.05
    eps_w: float = 1.0
    lam: float = 1.0
    alpha: float = 1.0
    seed: int = 0
    fit_intercept: bool = False

    def __post_init__(self):
        for name in ("outer_iters", "theta_iters", "w_iters", "ascent_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("eps_x", "eps_theta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        # eps_w = 0 is the documented switch that freezes the weights at
        # all-ones, reducing the trainer to the uniform-cost baseline
        if self.eps_w < 0:
            raise ValueError("eps_w must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def adv(self) -> AdvConfig:
        return AdvConfig(lam=self.lam, eps_x=self.eps_x, ascent_steps=self.ascent_steps)


@dataclass
class HistoryEntry:
    outer_iter: int
    r_value: float
    env_losses: dict[int, float]
    w: np.ndarray


@dataclass
class TrainedModel:
    params: ModelParams
    weights: CovariateWeights
    history: list[HistoryEntry] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta": self.params.theta.tolist(),
            "intercept": self.params.intercept,
            "w": self.weights.w.tolist(),
            "config": self.config,
            "history": [
                {
                    "outer_iter": h.outer_iter,
                    "r_value": h.r_value,
                    "env_losses": {str(k): v for k, v in h.env_losses.items()},
                    "w": h.w.tolist(),
                }
                for h in self.history
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        history = [
            HistoryEntry(
                outer_iter=int(h["outer_iter"]),
                r_value=float(h["r_value"]),
                env_losses={int(k): float(v) for k, v in h["env_losses"].items()},
                w=np.asarray(h["w"], dtype=np.float64),
            )
            for h in d.get("history", [])
        ]
        return cls(
            params=ModelParams(np.asarray(d["theta"], dtype=np.float64), d.get("intercept")),
            weights=CovariateWeights(np.asarray(d["w"], dtype=np.float64)),
            history=history,
            config=d.get("config", {}),
        )

    @classmethod
    def from_json(cls, s: str) -> "TrainedModel":
        return cls.from_dict(json.loads(s))


def r_objective(per_env_losses, alpha: float) -> float:
    """Mean environment loss plus alpha times the max-min loss margin."""
    losses = np.asarray(per_env_losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("empty environment loss list")
    if losses.size == 1:
        return float(losses[0])
    return float(losses.mean() + alpha * (losses.max() - losses.min()))


def env_losses(params: ModelParams, spec: LossSpec, envs: list[EnvDataset]) -> dict[int, float]:
    return {e.env_id: float(np.mean(batch_losses(params, spec, e.X, e.y))) for e in envs}


def dR_dtheta(params: ModelParams, spec: LossSpec, envs: list[EnvDataset], alpha: float) -> np.ndarray:
    """Analytic gradient of R w.r.t. the parameters, on clean data.

    Ties in the margin term resolve to the first maximizing/minimizing
    environment index (irrelevant to the value of R itself).
    """
    grads = [batch_grad_theta(params, spec, e.X, e.y) for e in envs]
    losses = np.array([float(np.mean(batch_losses(params, spec, e.X, e.y))) for e in envs])
    g = np.mean(grads, axis=0)
    if len(envs) > 1:
        g = g + alpha * (grads[int(np.argmax(losses))] - grads[int(np.argmin(losses))])
    return g


class ThetaTrainResult(NamedTuple):
    params: ModelParams
    trace_theta_XA: np.ndarray  # (n, n_params, m), running sum over descent steps
    trace_XA_w: np.ndarray  # (n, m), running sum over the ascent passes


def train_theta(
    params: ModelParams,
    spec: LossSpec,
    w: CovariateWeights,
    envs: list[EnvDataset],
    cfg: SALConfig,
    collect_traces: bool = True,
) -> ThetaTrainResult:
    """T_theta descent steps on the pooled adversarial surrogate.

    Every step re-ascends from the clean inputs (cold start), accumulates
    the parameter-response trace ``-eps_theta * sum_t mixed_grad / n`` and
    the weight-response trace from the ascent, then updates theta with the
    mean surrogate gradient. Trace accumulation can be skipped when the
    caller will not use the weight gradient; the parameter trajectory is
    unaffected.
    """
    X, y, _ = pool_envs(envs)
    pooled = EnvDataset(X, y, env_id=-1)
    n, m = X.shape
    params = params.copy()
    trace_theta_XA = np.zeros((n, params.n_params, m))
    trace_XA_w = np.zeros((n, m))
    adv_cfg = cfg.adv()
    for _ in range(cfg.theta_iters):
        state = ascend(params, spec, w, pooled, adv_cfg)
        if collect_traces:
            trace_XA_w += state.trace_dXA_dw
            trace_theta_XA += (-cfg.eps_theta / n) * batch_mixed_grad(params, spec, state.X_A, y)
        step = batch_grad_theta(params, spec, state.X_A, y)
        if not np.all(np.isfinite(step)):
            raise DivergenceError("non-finite parameter gradient during training")
        if params.intercept is None:
            params.theta = params.theta - cfg.eps_theta * step
        else:
            params.theta = params.theta - cfg.eps_theta * step[:-1]
            params.intercept = params.intercept - cfg.eps_theta * float(step[-1])
    return ThetaTrainResult(params, trace_theta_XA, trace_XA_w)


def grad_w(trace_theta_XA: np.ndarray, trace_XA_w: np.ndarray, dR_dth: np.ndarray) -> np.ndarray:
    """Chain the three factors into the covariate-weight gradient.

    trace_theta_XA holds per-sample (n_params x m) blocks of dtheta/dX_A;
    trace_XA_w the per-sample diagonal of dX_A/dw. The product contracts
    to an m-vector and vanishes whenever any factor is zero.
    """
    if trace_theta_XA.shape[1] != dR_dth.shape[0]:
        raise ValueError("dR/dtheta length does not match the trace's parameter axis")
    if trace_theta_XA.shape[0] != trace_XA_w.shape[0] or trace_theta_XA.shape[2] != trace_XA_w.shape[1]:
        raise ValueError("trace shapes do not compose")
    u = np.einsum("p,ipj->ij", dR_dth, trace_theta_XA)
    return np.einsum("ij,ij->j", u, trace_XA_w)


def _init_params(m: int, fit_intercept: bool) -> ModelParams:
    return ModelParams(np.zeros(m), 0.0 if fit_intercept else None)


def train(envs: list[EnvDataset], spec: LossSpec, cfg: SALConfig) -> TrainedModel:
    """Full alternating loop; deterministic given the configuration."""
    X, _, _ = pool_envs(envs)
    m = X.shape[1]
    params = _init_params(m, cfg.fit_intercept)
    weights = CovariateWeights.ones(m)
    history: list[HistoryEntry] = []
    adapt_w = cfg.w_iters > 0 and cfg.eps_w > 0
    for i in range(cfg.outer_iters):
        params, trace_theta_XA, trace_XA_w = train_theta(
            params, spec, weights, envs, cfg, collect_traces=adapt_w
        )
        losses = env_losses(params, spec, envs)
        r_val = r_objective(list(losses.values()), cfg.alpha)
        if not np.isfinite(r_val):
            raise DivergenceError("non-finite environment risk; training diverged")
        if adapt_w:
            g = grad_w(trace_theta_XA, trace_XA_w, dR_dtheta(params, spec, envs, cfg.alpha))
            for _ in range(cfg.w_iters):
                weights = project(weights.w - cfg.eps_w * g)
        history.append(HistoryEntry(i, r_val, losses, weights.w.copy()))
    return TrainedModel(params, weights, history, config=asdict(cfg) | {"loss": spec.kind, "method": "sal"})


# ---------------------------------------------------------------------------
# gradient-direction diagnostic


@dataclass
class TrainingSnapshot:
    """Mid-training state captured for the gradient-accuracy diagnostic."""

    envs: list[EnvDataset]
    spec: LossSpec
    cfg: SALConfig
    start_params: ModelParams  # parameters entering the captured theta phase
    weights: CovariateWeights
    grad: np.ndarray  # chained dR/dw approximation at this state
    base_r: float  # R after retraining theta under the captured weights


def make_snapshot(envs: list[EnvDataset], spec: LossSpec, cfg: SALConfig, warmup_iters: int) -> TrainingSnapshot:
    """Run ``warmup_iters`` outer iterations, then capture one theta phase."""
    X, _, _ = pool_envs(envs)
    m = X.shape[1]
    params = _init_params(m, cfg.fit_intercept)
    weights = CovariateWeights.ones(m)
    for _ in range(warmup_iters):
        params, t_th, t_w = train_theta(params, spec, weights, envs, cfg)
        g = grad_w(t_th, t_w, dR_dtheta(params, spec, envs, cfg.alpha))
        for _ in range(cfg.w_iters):
            weights = project(weights.w - cfg.eps_w * g)
    start = params.copy()
    params, t_th, t_w = train_theta(params, spec, weights, envs, cfg)
    g = grad_w(t_th, t_w, dR_dtheta(params, spec, envs, cfg.alpha))
    base_r = r_objective(list(env_losses(params, spec, envs).values()), cfg.alpha)
    return TrainingSnapshot(envs, spec, cfg, start, weights, g, base_r)


def _r_after_retrain(snap: TrainingSnapshot, w: CovariateWeights) -> float:
    res = train_theta(snap.start_params, snap.spec, w, snap.envs, snap.cfg)
    return r_objective(list(env_losses(res.params, snap.spec, snap.envs).values()), snap.cfg.alpha)


def gradient_accuracy_check(snap: TrainingSnapshot, n_random: int, seed: int) -> float:
    """Fraction of random equal-length directions the approximation beats.

    The approximated step is w <- Proj(w - eps_w * grad); each random probe
    moves by the same length along a uniform random unit direction, theta
    is retrained deterministically, and the resulting changes in R are
    compared. An exact tie scores half a win, so a zero gradient (every
    probe collapses to no movement) comes out at exactly one half, and a
    probe that happens to coincide with the approximation cannot push the
    fraction below zero.
    """
    if n_random < 1:
        raise ValueError("n_random must be >= 1")
    step_len = snap.cfg.eps_w * float(np.linalg.norm(snap.grad))
    if step_len > 0:
        w_g = project(snap.weights.w - snap.cfg.eps_w * snap.grad)
        delta_approx = _r_after_retrain(snap, w_g) - snap.base_r
    else:
        delta_approx = 0.0
    rng = np.random.default_rng(seed)
    score = 0.0
    for _ in range(n_random):
        d = rng.standard_normal(snap.weights.dim)
        norm = float(np.linalg.norm(d))
        if step_len > 0 and norm > 0:
            w_r = project(snap.weights.w + (step_len / norm) * d)
            delta_r = _r_after_retrain(snap, w_r) - snap.base_r
        else:
            delta_r = 0.0
        if delta_approx < delta_r:
            score += 1.0
        elif delta_approx == delta_r:
            score += 0.5
    return score / n_random
