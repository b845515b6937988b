"""Linear predictive models: losses, analytic gradients, and the mixed
second derivatives used by the covariate-weight gradient chain.

Every operation here is a pure function of its arguments; all derivatives
are exact analytic forms (finite-difference agreement is enforced by the
test suite). Supported losses:

* ``squared``   -- (y - z)^2 with z = theta.x + intercept
* ``absolute``  -- |y - z|, subgradient at zero residual defined as 0
* ``logistic``  -- binary cross-entropy on sigmoid(z), targets in {0, 1}
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOSS_KINDS = ("squared", "absolute", "logistic")
# integer codes shared with the compiled ascent kernel
LOSS_CODES = {"squared": 0, "absolute": 1, "logistic": 2}


@dataclass(frozen=True)
class LossSpec:
    """Which per-sample loss the pipeline uses."""

    kind: str = "squared"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")

    @property
    def code(self) -> int:
        return LOSS_CODES[self.kind]


@dataclass
class ModelParams:
    """Linear parameter vector, optionally with an intercept.

    The intercept is never adversarially perturbed and carries no covariate
    weight (it corresponds to no covariate).
    """

    theta: np.ndarray
    intercept: float | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1:
            raise ValueError("theta must be a 1-D vector")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta entries must be finite")
        if self.intercept is not None:
            self.intercept = float(self.intercept)
            if not np.isfinite(self.intercept):
                raise ValueError("intercept must be finite")

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    @property
    def n_params(self) -> int:
        return self.dim + (1 if self.intercept is not None else 0)

    def copy(self) -> "ModelParams":
        return ModelParams(self.theta.copy(), self.intercept)

    def predict(self, X: np.ndarray) -> np.ndarray:
        z = np.asarray(X, dtype=np.float64) @ self.theta
        if self.intercept is not None:
            z = z + self.intercept
        return z


@dataclass
class EnvDataset:
    """One environment's design matrix and targets."""

    X: np.ndarray
    y: np.ndarray
    env_id: int = 0

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be an n x m matrix")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y length must match the number of rows of X")
        if self.X.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains NaN/Inf entries")
        self.env_id = int(self.env_id)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def pool_envs(envs: list[EnvDataset]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack environments into (X, y, env_sizes); all must share the dimension."""
    if not envs:
        raise ValueError("empty environment list")
    dims = {e.dim for e in envs}
    if len(dims) != 1:
        raise ValueError(f"environments disagree on covariate dimension: {sorted(dims)}")
    X = np.vstack([e.X for e in envs])
    y = np.concatenate([e.y for e in envs])
    sizes = np.array([e.n for e in envs], dtype=np.intp)
    return X, y, sizes


def _check_sample(params: ModelParams, spec: LossSpec, x: np.ndarray, y: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({params.dim},)")
    if spec.kind == "logistic" and y not in (0.0, 1.0):
        raise ValueError("logistic loss requires targets in {0, 1}")
    return x


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z):
    # log(1 + e^z), overflow-safe
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def loss(params: ModelParams, spec: LossSpec, x: np.ndarray, y: float) -> float:
    """Per-sample loss l(theta; x, y). Nonnegative for every kind."""
    x = _check_sample(params, spec, x, y)
    z = float(x @ params.theta) + (params.intercept or 0.0)
    if spec.kind == "squared":
        return (y - z) ** 2
    if spec.kind == "absolute":
        return abs(y - z)
    return float(_softplus(z) - y * z)


def _dloss_dz(spec: LossSpec, z: float, y: float) -> float:
    if spec.kind == "squared":
        return -2.0 * (y - z)
    if spec.kind == "absolute":
        r = y - z
        return -float(np.sign(r))  # sign(0) = 0: zero subgradient at the kink
    return float(_sigmoid(z)) - y


def grad_theta(params: ModelParams, spec: LossSpec, x: np.ndarray, y: float) -> np.ndarray:
    """Exact gradient of the per-sample loss w.r.t. theta (covariate part only)."""
    x = _check_sample(params, spec, x, y)
    z = float(x @ params.theta) + (params.intercept or 0.0)
    return _dloss_dz(spec, z, y) * x


def grad_x(params: ModelParams, spec: LossSpec, x: np.ndarray, y: float) -> np.ndarray:
    """Exact gradient of the per-sample loss w.r.t. the input x."""
    x = _check_sample(params, spec, x, y)
    z = float(x @ params.theta) + (params.intercept or 0.0)
    return _dloss_dz(spec, z, y) * params.theta


def mixed_grad(params: ModelParams, spec: LossSpec, x: np.ndarray, y: float) -> np.ndarray:
    """Jacobian of grad_theta w.r.t. x for one sample.

    Returns an (n_params x m) matrix; when an intercept is present its row
    is last. For the absolute loss the Jacobian holds almost everywhere
    (the residual kink is measure-zero).
    """
    x = _check_sample(params, spec, x, y)
    m = params.dim
    theta = params.theta
    z = float(x @ theta) + (params.intercept or 0.0)
    rows = params.n_params
    out = np.zeros((rows, m))
    if spec.kind == "squared":
        r = y - z
        out[:m] = 2.0 * np.outer(x, theta) - 2.0 * r * np.eye(m)
        if params.intercept is not None:
            out[m] = 2.0 * theta
    elif spec.kind == "absolute":
        s = float(np.sign(y - z))
        out[:m] = -s * np.eye(m)
        # intercept row is zero a.e.
    else:
        p = float(_sigmoid(z))
        pp = p * (1.0 - p)
        out[:m] = pp * np.outer(x, theta) + (p - y) * np.eye(m)
        if params.intercept is not None:
            out[m] = pp * theta
    return out


# ---------------------------------------------------------------------------
# batched forms used by the trainers (same math, vectorized over samples)


def batch_losses(params: ModelParams, spec: LossSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = params.predict(X)
    if spec.kind == "squared":
        return (y - z) ** 2
    if spec.kind == "absolute":
        return np.abs(y - z)
    return _softplus(z) - y * z


def batch_dloss_dz(params: ModelParams, spec: LossSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = params.predict(X)
    if spec.kind == "squared":
        return -2.0 * (y - z)
    if spec.kind == "absolute":
        return -np.sign(y - z)
    return _sigmoid(z) - y


def batch_grad_theta(params: ModelParams, spec: LossSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean over samples of the full parameter gradient (intercept last)."""
    d = batch_dloss_dz(params, spec, X, y)
    g_theta = (d @ X) / len(y)
    if params.intercept is None:
        return g_theta
    return np.concatenate([g_theta, [d.mean()]])


def batch_mixed_grad(params: ModelParams, spec: LossSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample mixed_grad stacked into an (n, n_params, m) array."""
    n, m = X.shape
    theta = params.theta
    z = params.predict(X)
    rows = params.n_params
    out = np.zeros((n, rows, m))
    eye = np.eye(m)
    if spec.kind == "squared":
        r = y - z
        out[:, :m, :] = 2.0 * np.einsum("ik,j->ikj", X, theta) - 2.0 * r[:, None, None] * eye
        if params.intercept is not None:
            out[:, m, :] = 2.0 * theta
    elif spec.kind == "absolute":
        s = np.sign(y - z)
        out[:, :m, :] = -s[:, None, None] * eye
    else:
        p = _sigmoid(z)
        pp = p * (1.0 - p)
        out[:, :m, :] = (
            np.einsum("i,ik,j->ikj", pp, X, theta) + (p - y)[:, None, None] * eye
        )
        if params.intercept is not None:
            out[:, m, :] = pp[:, None] * theta
    return out
