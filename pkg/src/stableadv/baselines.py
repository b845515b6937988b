"""Reference methods: ERM, LASSO, Ridge, WDRL (uniform-weight robust
training, Lagrangian or prescribed-radius form), and the linear IRM
gradient penalty.

All fits are full-batch first-order loops with fixed step size, start at
zero parameters, and are deterministic. Every method returns the same
TrainedModel shape as the adaptive-weight trainer, with weights pinned at
all-ones.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .adversary import AdvConfig, ascend
from .cost import CovariateWeights
from .errors import DivergenceError
from .models import (
    EnvDataset,
    LossSpec,
    ModelParams,
    batch_dloss_dz,
    batch_grad_theta,
    batch_losses,
    pool_envs,
)
from .trainer import SALConfig, TrainedModel, train

METHOD_NAMES = ("erm", "lasso", "ridge", "wdrl", "irm", "sal")


@dataclass
class SGDConfig:
    step_size: float = 0.05
    iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0 or self.iters < 0:
            raise ValueError("step_size must be > 0 and iters >= 0")


@dataclass
class BaselineConfig:
    method: str = "erm"
    reg_lambda: float = 0.0
    radius: float | None = None
    sgd: SGDConfig = field(default_factory=SGDConfig)
    fit_intercept: bool = False
    # knobs forwarded to the robust trainer when method == "wdrl"
    ascent_steps: int = 5
    eps_x: float = 0.05

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")
        if self.radius is not None and self.method != "wdrl":
            raise ValueError("radius is only meaningful for wdrl")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be >= 0")


def _finish(theta: np.ndarray, intercept: float | None, m: int, cfg: BaselineConfig, extra: dict) -> TrainedModel:
    params = ModelParams(theta, intercept)
    return TrainedModel(
        params,
        CovariateWeights.ones(m),
        history=[],
        config={"method": cfg.method, "sgd": asdict(cfg.sgd), "reg_lambda": cfg.reg_lambda} | extra,
    )


def _gd(envs, spec, cfg: BaselineConfig, grad_extra=None, prox=None, extra=None) -> TrainedModel:
    """Shared descent loop: mean pooled loss gradient + optional penalty/prox."""
    X, y, _ = pool_envs(envs)
    n, m = X.shape
    theta = np.zeros(m)
    intercept = 0.0 if cfg.fit_intercept else None
    for _ in range(cfg.sgd.iters):
        params = ModelParams(theta, intercept)
        step = batch_grad_theta(params, spec, X, y)
        if not np.all(np.isfinite(step)):
            raise DivergenceError("non-finite gradient; step size too large")
        g_theta = step[:m]
        if grad_extra is not None:
            g_theta = g_theta + grad_extra(theta)
        theta = theta - cfg.sgd.step_size * g_theta
        if prox is not None:
            theta = prox(theta)
        if intercept is not None:
            intercept -= cfg.sgd.step_size * float(step[-1])
    return _finish(theta, intercept, m, cfg, extra or {"loss": spec.kind})


def fit_erm(envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Plain pooled empirical risk minimization."""
    return _gd(envs, spec, cfg)


def fit_ridge(envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Pooled mean loss plus reg_lambda * ||theta||_2^2 (intercept unpenalized)."""
    return _gd(envs, spec, cfg, grad_extra=lambda th: 2.0 * cfg.reg_lambda * th)


def fit_lasso(envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Pooled mean loss plus reg_lambda * ||theta||_1, via proximal soft-threshold steps."""
    thresh = cfg.sgd.step_size * cfg.reg_lambda

    def prox(th):
        return np.sign(th) * np.maximum(np.abs(th) - thresh, 0.0)

    return _gd(envs, spec, cfg, prox=prox)


def _wdrl_sal_config(cfg: BaselineConfig, lam: float) -> SALConfig:
    return SALConfig(
        outer_iters=1,
        theta_iters=cfg.sgd.iters,
        w_iters=0,
        ascent_steps=cfg.ascent_steps,
        eps_x=cfg.eps_x,
        eps_theta=cfg.sgd.step_size,
        eps_w=0.0,
        lam=lam,
        alpha=0.0,
        seed=cfg.sgd.seed,
        fit_intercept=cfg.fit_intercept,
    )


def _dual_objective(model: TrainedModel, envs, spec, cfg: BaselineConfig, lam: float, rho: float) -> float:
    """lam * rho + mean penalized surrogate at the fitted parameters."""
    X, y, _ = pool_envs(envs)
    pooled = EnvDataset(X, y, env_id=-1)
    adv = AdvConfig(lam=lam, eps_x=cfg.eps_x, ascent_steps=cfg.ascent_steps)
    state = ascend(model.params, spec, CovariateWeights.ones(X.shape[1]), pooled, adv)
    vals = batch_losses(model.params, spec, state.X_A, y)
    if math.isfinite(lam):
        pen = np.einsum("ij,ij->i", state.X_A - X, state.X_A - X)
        vals = vals - lam * pen
    return lam * rho + float(np.mean(vals))


def fit_wdrl(envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Uniform-weight robust fit.

    Lagrangian mode (radius None) runs the adaptive trainer with weights
    frozen at all-ones and lam = reg_lambda, giving trajectories identical
    to the adaptive method with its weight learning disabled. Radius mode
    minimizes lam * rho + E[s_lam] over lam on a 31-point log grid in
    [1e-3, 1e3] followed by golden-section refinement in log space; rho = 0
    resolves to the unperturbed (infinite-lam) limit, i.e. plain ERM.
    """
    if cfg.radius is None:
        model = train(envs, spec, _wdrl_sal_config(cfg, cfg.reg_lambda))
        model.config = {"method": "wdrl", "reg_lambda": cfg.reg_lambda, "loss": spec.kind, "sgd": asdict(cfg.sgd)}
        return model

    rho = float(cfg.radius)
    if rho == 0.0:
        model = train(envs, spec, _wdrl_sal_config(cfg, math.inf))
        model.config = {"method": "wdrl", "radius": 0.0, "lam": None, "loss": spec.kind, "sgd": asdict(cfg.sgd)}
        return model

    def evaluate_lam(lam: float) -> tuple[float, TrainedModel]:
        model = train(envs, spec, _wdrl_sal_config(cfg, lam))
        return _dual_objective(model, envs, spec, cfg, lam, rho), model

    grid = np.logspace(-3, 3, 31)
    values = []
    for lam in grid:
        val, _ = evaluate_lam(float(lam))
        values.append(val)
    best = int(np.argmin(values))
    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, len(grid) - 1)])
    # golden-section refinement on log-lam
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, _ = evaluate_lam(math.exp(c))
    fd, _ = evaluate_lam(math.exp(d))
    for _ in range(12):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc, _ = evaluate_lam(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd, _ = evaluate_lam(math.exp(d))
    lam_star = math.exp((a + b) / 2.0)
    val, model = evaluate_lam(lam_star)
    model.config = {"method": "wdrl", "radius": rho, "lam": lam_star, "dual_value": val, "loss": spec.kind, "sgd": asdict(cfg.sgd)}
    return model


def fit_irm(envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Summed per-environment risk plus the scalar-multiplier gradient penalty.

    The penalty for environment e is (d/dw E_e[l((w * theta); x, y)] at
    w = 1)^2; its parameter gradient is analytic for the squared and
    logistic losses.
    """
    if len(envs) < 2:
        raise ValueError("the invariance penalty needs at least 2 environments")
    if spec.kind == "absolute":
        raise ValueError("the scalar gradient penalty is not differentiable for the absolute loss")
    X_e = [e.X for e in envs]
    y_e = [e.y for e in envs]
    m = X_e[0].shape[1]
    theta = np.zeros(m)
    intercept = 0.0 if cfg.fit_intercept else None
    for _ in range(cfg.sgd.iters):
        params = ModelParams(theta, intercept)
        g_theta = np.zeros(m)
        g_int = 0.0
        for X, y in zip(X_e, y_e):
            step = batch_grad_theta(params, spec, X, y)
            g_theta += step[:m]
            if intercept is not None:
                g_int += float(step[-1])
            z = params.predict(X)
            if spec.kind == "squared":
                # u = dE[(y - w z)^2]/dw at w=1 = -2 E[(y - z) z]
                u = -2.0 * float(np.mean((y - z) * z))
                # du/dtheta = -2 E[x (y - 2 z)]
                du = -2.0 * ((y - 2.0 * z) @ X) / len(y)
                du_int = -2.0 * float(np.mean(y - 2.0 * z))
            else:
                # logistic: u = E[(sigmoid(z) - y) z]
                p = 0.5 * (1.0 + np.tanh(0.5 * z))
                u = float(np.mean((p - y) * z))
                pp = p * (1.0 - p)
                du = ((pp * z + p - y) @ X) / len(y)
                du_int = float(np.mean(pp * z + p - y))
            g_theta += cfg.reg_lambda * 2.0 * u * du
            if intercept is not None:
                g_int += cfg.reg_lambda * 2.0 * u * du_int
        if not np.all(np.isfinite(g_theta)):
            raise DivergenceError("non-finite gradient; step size too large")
        theta = theta - cfg.sgd.step_size * g_theta
        if intercept is not None:
            intercept -= cfg.sgd.step_size * g_int
    return _finish(theta, intercept, m, cfg, {"loss": spec.kind})


def irm_penalty(params: ModelParams, spec: LossSpec, env: EnvDataset) -> float:
    """The squared scalar gradient penalty for one environment (diagnostic)."""
    z = params.predict(env.X)
    if spec.kind == "squared":
        u = -2.0 * float(np.mean((env.y - z) * z))
    elif spec.kind == "logistic":
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        u = float(np.mean((p - env.y) * z))
    else:
        raise ValueError("penalty undefined for the absolute loss")
    return u * u


def fit(method: str, envs: list[EnvDataset], spec: LossSpec, cfg: BaselineConfig) -> TrainedModel:
    """Dispatch a baseline fit by method name."""
    fits = {
        "erm": fit_erm,
        "lasso": fit_lasso,
        "ridge": fit_ridge,
        "wdrl": fit_wdrl,
        "irm": fit_irm,
    }
    if method not in fits:
        raise ValueError(f"unknown baseline method {method!r}")
    return fits[method](envs, spec, cfg)
