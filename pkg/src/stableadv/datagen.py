"""Seeded synthetic generators for three multi-environment shift regimes,
each exposing the ground-truth stable/unstable covariate split.

Noise conventions: every noise parameter in this module is a standard
deviation. The three regimes:

* toy           -- 2 covariates [S, V]; Y = 5 S + S^2 + e1, V = alpha Y + e2.
                   alpha varies across environments.
* selection_bias -- covariates [S (n_s), V (n_v)] with correlated S built
                   from auxiliary Gaussians; Y = theta_s . S + beta S1 S2 S3 + e.
                   Environments differ by a rejection-sampling rate r that
                   couples the last unstable covariate(s) to f(S).
* anti_causal   -- S from a k-component Gaussian mixture; Y from S;
                   V = theta_v Y + component-dependent noise. Environments
                   are mixture weights over components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingBudgetError
from .models import EnvDataset
from .rngutil import categorical, derive_seed, normal, open_unit

REJECTION_BUDGET_FACTOR = 10_000


@dataclass
class GroundTruth:
    """Index split of stable/unstable covariates plus the true mean function."""

    stable_dims: list[int]
    unstable_dims: list[int]
    f_star: str

    def __post_init__(self):
        if set(self.stable_dims) & set(self.unstable_dims):
            raise ValueError("stable and unstable index sets must be disjoint")

    def to_dict(self) -> dict:
        return {
            "stable_dims": list(self.stable_dims),
            "unstable_dims": list(self.unstable_dims),
            "f_star": self.f_star,
        }


# ---------------------------------------------------------------------------
# toy regime


def gen_toy(
    alpha: float,
    n: int,
    seed: int,
    env_id: int = 0,
    s_std: float = math.sqrt(0.5),
    noise_y_std: float = math.sqrt(0.1),
    noise_v_std: float = 1.0,
) -> tuple[EnvDataset, GroundTruth]:
    """One toy environment: Y = 5 S + S^2 + e1 and V = alpha Y + e2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    S = normal(rng, 0.0, s_std, n)
    y = 5.0 * S + S**2 + normal(rng, 0.0, noise_y_std, n)
    V = alpha * y + normal(rng, 0.0, noise_v_std, n)
    gt = GroundTruth([0], [1], "5*s + s^2")
    return EnvDataset(np.column_stack([S, V]), y, env_id=env_id), gt


def gen_toy_training(
    n_major: int = 180,
    alpha_major: float = 1.0,
    n_minor: int = 20,
    alpha_minor: float = -0.1,
    seed: int = 0,
    **kwargs,
) -> tuple[list[EnvDataset], GroundTruth]:
    """The imbalanced two-environment training mixture."""
    e1, gt = gen_toy(alpha_major, n_major, derive_seed(seed, "toy", 1), env_id=1, **kwargs)
    e2, _ = gen_toy(alpha_minor, n_minor, derive_seed(seed, "toy", 2), env_id=2, **kwargs)
    return [e1, e2], gt


# ---------------------------------------------------------------------------
# selection-bias regime

SELECTION_THETA_PATTERN = (1 / 3, -2 / 3, 1.0, -1 / 3, 2 / 3, -1.0)


def selection_theta(n_s: int) -> np.ndarray:
    """Stable coefficients: the 6-entry pattern extended cyclically."""
    reps = -(-n_s // len(SELECTION_THETA_PATTERN))
    return np.array((SELECTION_THETA_PATTERN * reps)[:n_s])


@dataclass
class SelectionBiasSpec:
    """Parameters of one biased environment draw."""

    r: list[float] = field(default_factory=lambda: [1.7])
    n: int = 1000
    seed: int = 0
    n_s: int = 5
    n_v: int = 5
    d: int = 10
    beta: float = 1.0
    noise_std: float = math.sqrt(0.3)

    def __post_init__(self):
        self.r = [float(v) for v in np.atleast_1d(self.r)]
        if any(abs(v) <= 1.0 for v in self.r):
            raise ValueError("every |r| must be > 1")
        if len(self.r) > self.n_v:
            raise ValueError("more bias rates than unstable covariates")
        if self.d < self.n_s + 1:
            raise ValueError("need d >= n_s + 1 auxiliary variables")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _raw_selection_batch(spec: SelectionBiasSpec, rng: np.random.Generator, size: int):
    Z = normal(rng, 0.0, 1.0, (size, spec.d))
    V = normal(rng, 0.0, 1.0, (size, spec.n_v))
    S = 0.8 * Z[:, : spec.n_s] + 0.2 * Z[:, 1 : spec.n_s + 1]
    f = S @ selection_theta(spec.n_s) + spec.beta * S[:, 0] * S[:, 1] * S[:, 2]
    y = f + normal(rng, 0.0, spec.noise_std, size)
    return np.hstack([S, V]), y, f


def selection_probability(spec: SelectionBiasSpec, f: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Acceptance probability: prod_i |r_i|^(-5 |f(s) - sign(r_i) v_i|).

    The bias applies to the last len(r) unstable covariates. Always in
    (0, 1] while every |r_i| > 1.
    """
    n_b = len(spec.r)
    p = np.ones(len(f))
    for i, r in enumerate(spec.r):
        v = V[:, spec.n_v - n_b + i]
        p = p * np.abs(r) ** (-5.0 * np.abs(f - np.sign(r) * v))
    return p


def gen_selection_env(spec: SelectionBiasSpec, env_id: int = 0) -> tuple[EnvDataset, GroundTruth]:
    """Rejection-sample one environment until the target count is reached."""
    rng = np.random.default_rng(spec.seed)
    budget = REJECTION_BUDGET_FACTOR * spec.n
    drawn = 0
    xs, ys = [], []
    got = 0
    while got < spec.n:
        size = min(max(4 * spec.n, 8192), budget - drawn)
        if size <= 0:
            raise SamplingBudgetError(
                f"needed {spec.n} samples but exhausted {budget} draws (rates {spec.r})"
            )
        X, y, f = _raw_selection_batch(spec, rng, size)
        drawn += size
        keep = open_unit(rng, size) <= selection_probability(spec, f, X[:, spec.n_s :])
        xs.append(X[keep])
        ys.append(y[keep])
        got += int(keep.sum())
    X = np.vstack(xs)[: spec.n]
    y = np.concatenate(ys)[: spec.n]
    gt = GroundTruth(
        list(range(spec.n_s)),
        list(range(spec.n_s, spec.n_s + spec.n_v)),
        "theta_s . s + beta * s1 s2 s3",
    )
    return EnvDataset(X, y, env_id=env_id), gt


def gen_selection_bias(
    r,
    kappa: float,
    n: int,
    seed: int = 0,
    n_s: int = 5,
    n_v: int = 5,
    d: int = 10,
    beta: float = 1.0,
    noise_std: float = math.sqrt(0.3),
    minor_r: float = -1.1,
) -> tuple[list[EnvDataset], GroundTruth]:
    """Two-environment training mixture: kappa*n points at rate r and
    (1-kappa)*n points at the fixed minority rate."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    n1 = int(round(kappa * n))
    n2 = n - n1
    if n1 < 1 or n2 < 1:
        raise ValueError("both environments need at least one sample")
    r = [float(v) for v in np.atleast_1d(r)]
    base = dict(n_s=n_s, n_v=n_v, d=d, beta=beta, noise_std=noise_std)
    e1, gt = gen_selection_env(
        SelectionBiasSpec(r=r, n=n1, seed=derive_seed(seed, "sel", 1), **base), env_id=1
    )
    e2, _ = gen_selection_env(
        SelectionBiasSpec(r=[minor_r] * len(r), n=n2, seed=derive_seed(seed, "sel", 2), **base),
        env_id=2,
    )
    return [e1, e2], gt


TEST_RATES_1D = (-3.0, -2.0, -1.7, -1.5, -1.3, 1.3, 1.5, 1.7, 2.0, 3.0)


# ---------------------------------------------------------------------------
# anti-causal regime

ANTI_CAUSAL_SIGMAS = (0.2, 0.5, 1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0)
_MU_TAILS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0)) + ((-1.0, -1.0),) * 7


def anti_causal_means(n_s: int, k: int = 10) -> np.ndarray:
    """Component means: zeros except the printed pattern on the last two dims."""
    if n_s < 2:
        raise ValueError("need at least 2 stable dims for the mean pattern")
    mu = np.zeros((k, n_s))
    for i in range(k):
        mu[i, -2:] = _MU_TAILS[i % len(_MU_TAILS)] if i < len(_MU_TAILS) else (-1.0, -1.0)
    return mu


def sample_anti_causal_coefs(seed: int, n_s: int, n_v: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-run coefficient draw: theta_s ~ N(1, I), theta_v ~ N(0, 0.1 I)."""
    rng = np.random.default_rng(seed)
    theta_s = normal(rng, 1.0, 1.0, n_s)
    theta_v = normal(rng, 0.0, math.sqrt(0.1), n_v)
    return theta_s, theta_v


def gen_anti_causal(
    z_weights,
    n: int,
    seed: int,
    theta_s: np.ndarray,
    theta_v: np.ndarray,
    env_id: int = 0,
    beta: float = 0.1,
    noise_y_std: float = math.sqrt(0.3),
    sigmas=ANTI_CAUSAL_SIGMAS,
) -> tuple[EnvDataset, GroundTruth]:
    """One environment defined by mixture weights over the k components."""
    z = np.asarray(z_weights, dtype=np.float64)
    if z.ndim != 1 or np.any(z < 0) or abs(z.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must be a simplex vector")
    if n < 1:
        raise ValueError("n must be >= 1")
    theta_s = np.asarray(theta_s, dtype=np.float64)
    theta_v = np.asarray(theta_v, dtype=np.float64)
    n_s, n_v = len(theta_s), len(theta_v)
    k = len(z)
    if k > len(sigmas):
        raise ValueError("more components than noise levels")
    mu = anti_causal_means(n_s, k)
    rng = np.random.default_rng(seed)
    comp = categorical(rng, z, n)
    S = mu[comp] + normal(rng, 0.0, 1.0, (n, n_s))
    y = S @ theta_s + beta * S[:, 0] * S[:, 1] * S[:, 2] + normal(rng, 0.0, noise_y_std, n)
    sig = np.asarray(sigmas)[comp]
    V = y[:, None] * theta_v[None, :] + sig[:, None] * normal(rng, 0.0, 1.0, (n, n_v))
    gt = GroundTruth(
        list(range(n_s)), list(range(n_s, n_s + n_v)), "theta_s . s + beta * s1 s2 s3"
    )
    return EnvDataset(np.hstack([S, V]), y, env_id=env_id), gt


def one_hot(k: int, i: int) -> np.ndarray:
    z = np.zeros(k)
    z[i] = 1.0
    return z


def gen_anti_causal_envs(
    seed: int,
    n_s: int = 9,
    n_v: int = 1,
    train_sizes=(1000, 100, 100),
    n_test: int = 1000,
    beta: float = 0.1,
    k: int = 10,
) -> tuple[list[EnvDataset], list[EnvDataset], GroundTruth]:
    """The 10-environment layout: components 1..3 train, 4..10 test.

    The stable/unstable coefficient vectors are resampled from the run
    seed, shared by every environment of the run.
    """
    theta_s, theta_v = sample_anti_causal_coefs(derive_seed(seed, "ac", "coefs"), n_s, n_v)
    train, test = [], []
    gt = None
    for i, size in enumerate(train_sizes):
        env, gt = gen_anti_causal(
            one_hot(k, i), size, derive_seed(seed, "ac", i), theta_s, theta_v,
            env_id=i + 1, beta=beta,
        )
        train.append(env)
    for i in range(len(train_sizes), k):
        env, gt = gen_anti_causal(
            one_hot(k, i), n_test, derive_seed(seed, "ac", i), theta_s, theta_v,
            env_id=i + 1, beta=beta,
        )
        test.append(env)
    return train, test, gt
