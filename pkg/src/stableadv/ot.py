"""Exact optimal transport on small finite supports.

This is the independent test oracle for the robust-training machinery: it
solves the transportation linear program exactly (HiGHS on the coupling
polytope, no entropic smoothing) and backs the ball-containment and
duality property checks. Supports are meant to stay small (tens of
points); nothing here is built for scale.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .rngutil import normal, open_unit

COST_KINDS = ("sq_l2", "l1", "weighted_sq_l2", "weighted_l1")


@dataclass
class DiscreteDistribution:
    """Finite-support probability measure."""

    support: np.ndarray  # (k, m)
    probs: np.ndarray  # (k,)

    def __post_init__(self):
        self.support = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (self.support.shape[0],):
            raise ValueError("probs length must match the number of support points")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1 within 1e-12")
        if len({tuple(p) for p in self.support}) != self.support.shape[0]:
            raise ValueError("support points must be distinct")

    @property
    def k(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]


def pairwise_cost(P_pts: np.ndarray, Q_pts: np.ndarray, cost_kind: str, w=None) -> np.ndarray:
    """Cost matrix C[i, j] = c(p_i, q_j) for the supported cost kinds."""
    if cost_kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    diff = P_pts[:, None, :] - Q_pts[None, :, :]
    if cost_kind.startswith("weighted"):
        if w is None:
            raise ValueError("weighted cost kinds need a weight vector")
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (P_pts.shape[1],):
            raise ValueError("weight vector dimension mismatch")
    if cost_kind == "sq_l2":
        return np.einsum("ijk,ijk->ij", diff, diff)
    if cost_kind == "l1":
        return np.abs(diff).sum(axis=2)
    if cost_kind == "weighted_sq_l2":
        wd = w * diff
        return np.einsum("ijk,ijk->ij", wd, wd)
    return (w * np.abs(diff)).sum(axis=2)


def wasserstein(P: DiscreteDistribution, Q: DiscreteDistribution, cost_kind: str = "sq_l2", w=None) -> float:
    """Exact transportation LP value between two discrete measures."""
    if P.dim != Q.dim:
        raise ValueError("distributions live in different dimensions")
    C = pairwise_cost(P.support, Q.support, cost_kind, w)
    k1, k2 = C.shape
    # marginal constraints; one row is redundant but HiGHS handles that
    A_eq = np.zeros((k1 + k2, k1 * k2))
    for i in range(k1):
        A_eq[i, i * k2 : (i + 1) * k2] = 1.0
    for j in range(k2):
        A_eq[k1 + j, j::k2] = 1.0
    b_eq = np.concatenate([P.probs, Q.probs])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise ValueError(f"transportation LP failed: {res.message}")
    return float(res.fun)


def wasserstein_bruteforce_uniform(P_pts: np.ndarray, Q_pts: np.ndarray, cost_kind: str, w=None) -> float:
    """Enumeration oracle for uniform marginals on equal-size supports.

    The extreme couplings between uniform measures of equal size are the
    permutation matchings, so the exact value is the cheapest permutation.
    """
    k = P_pts.shape[0]
    if Q_pts.shape[0] != k:
        raise ValueError("equal support sizes required")
    C = pairwise_cost(P_pts, Q_pts, cost_kind, w)
    best = math.inf
    for perm in itertools.permutations(range(k)):
        best = min(best, sum(C[i, perm[i]] for i in range(k)) / k)
    return float(best)


def in_ball(Q: DiscreteDistribution, P0: DiscreteDistribution, rho: float, cost_kind: str = "sq_l2", w=None) -> bool:
    """Whether Q lies inside the radius-rho ball around P0."""
    return wasserstein(Q, P0, cost_kind, w) <= rho + 1e-10


# ---------------------------------------------------------------------------
# property-check drivers


@dataclass
class ContainmentReport:
    """Outcome of the weighted-ball containment check."""

    trials: int
    inside_weighted: int
    violations: int
    boundary_gap: float
    cost_form: str
    violating_seeds: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.boundary_gap <= 1e-8


def _random_q_near(
    P0: DiscreteDistribution, rho: float, w: np.ndarray, cost_form: str, trial: int,
    rng: np.random.Generator,
) -> DiscreteDistribution:
    """Random jitter of P0 concentrated near the weighted ball boundary.

    The jitter scale is radius-matched per coordinate (divided by the
    weight) and varied with the trial index, and every other trial mildly
    tilts the probability vector; together roughly half the draws land
    inside the ball and the rest straddle the boundary.
    """
    base = math.sqrt(rho) if cost_form == "sq_l2" else rho / P0.dim
    scale = (0.4 + 0.175 * (trial % 3)) * base / w
    pts = P0.support + normal(rng, 0.0, 1.0, P0.support.shape) * scale
    probs = P0.probs.copy()
    if trial % 2 == 1:
        probs = probs * np.exp(0.05 * normal(rng, 0.0, 1.0, P0.k))
        probs = probs / probs.sum()
    return DiscreteDistribution(pts, probs)


def containment_check(
    P0: DiscreteDistribution,
    rho: float,
    w: np.ndarray,
    n_trials: int,
    seed: int,
    cost_form: str = "sq_l2",
) -> ContainmentReport:
    """Sample random measures and verify the weighted ball sits inside the
    unweighted one, then realize the boundary case by translating along a
    unit-weight coordinate.

    cost_form selects the base cost ("sq_l2" or "l1"); the weighted ball
    uses the matching weighted form.
    """
    w = np.asarray(w, dtype=np.float64)
    if np.min(w) < 1.0 or np.max(w) <= 1.0:
        raise ValueError("need w >= 1 entrywise with max entry > 1")
    if cost_form not in ("sq_l2", "l1"):
        raise ValueError("cost_form must be 'sq_l2' or 'l1'")
    weighted = "weighted_" + cost_form
    inside = 0
    violations = 0
    bad_seeds: list[int] = []
    for t in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))
        Q = _random_q_near(P0, rho, w, cost_form, t, rng)
        if wasserstein(Q, P0, weighted, w) <= rho + 1e-10:
            inside += 1
            if wasserstein(Q, P0, cost_form) > rho + 1e-10:
                violations += 1
                bad_seeds.append(t)

    # boundary construction: translate the marginal on a unit-weight dim
    unit_dims = np.where(w == 1.0)[0]
    if unit_dims.size == 0:
        raise ValueError("w has no unit-weight coordinate to translate along")
    delta = math.sqrt(rho) if cost_form == "sq_l2" else rho
    shifted = P0.support.copy()
    shifted[:, unit_dims[0]] += delta
    Q0 = DiscreteDistribution(shifted, P0.probs.copy())
    gap = abs(wasserstein(Q0, P0, weighted, w) - rho)
    return ContainmentReport(n_trials, inside, violations, gap, cost_form, bad_seeds)


@dataclass
class DualityReport:
    """Outcome of the penalized-surrogate duality inequality check."""

    instances: int
    max_violation: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _s_lambda_grid(loss_vals: np.ndarray, grid: np.ndarray, x0: float, lam: float, w: float) -> float:
    """sup over the grid of loss(xi) - lam * (w (xi - x0))^2."""
    return float(np.max(loss_vals - lam * (w * (grid - x0)) ** 2))


def duality_check(
    n_instances: int,
    seed: int,
    grid_points: int = 200,
    lam_grid_size: int = 50,
    n_candidates: int = 40,
    tol: float = 1e-6,
) -> DualityReport:
    """Random 1-D instances of the inequality

        sup_{Q in ball(rho)} E_Q[loss] <= min_lam { lam rho + E_P0[s_lam] }

    with the inner supremum taken over a fine grid, candidate measures
    supported on that same grid (so weak duality holds exactly), and the
    ball membership checked by the exact LP.
    """
    failures = 0
    worst = 0.0
    for t in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))
        k = int(rng.integers(2, 6))
        pts = np.sort(normal(rng, 0.0, 1.0, k))
        if len(np.unique(pts)) != k:
            pts = pts + np.arange(k) * 1e-9
        e = -np.log(open_unit(rng, k))
        probs = e / e.sum()
        P0 = DiscreteDistribution(pts[:, None], probs)
        rho = float(0.1 + 1.9 * open_unit(rng))
        w_scalar = 1.0 if t % 2 == 0 else float(1.0 + 2.0 * open_unit(rng))
        theta = float(normal(rng, 0.0, 1.5))
        y0 = float(normal(rng, 0.0, 1.0))

        span = 5.0 * math.sqrt(rho)
        grid = np.linspace(pts.min() - span, pts.max() + span, grid_points)
        # the base support must live on the grid: it guarantees
        # s_lambda(x_i) >= loss(x_i), which weak duality relies on
        grid = np.unique(np.concatenate([grid, pts]))
        n_grid = len(grid)
        loss_on_grid = (y0 - theta * grid) ** 2

        # right side: 50-point lambda grid, s_lambda by exhaustive grid max
        lam_grid = np.logspace(-2, 3, lam_grid_size)
        rhs = math.inf
        for lam in lam_grid:
            e_s = sum(
                p * _s_lambda_grid(loss_on_grid, grid, x0, lam, w_scalar)
                for p, x0 in zip(probs, pts)
            )
            rhs = min(rhs, lam * rho + e_s)

        # left side: random in-ball candidates supported on the same grid,
        # drawn from windows around each base point so most land in-ball
        best_lhs = float(np.dot(probs, (y0 - theta * pts) ** 2))  # Q = P0
        windows = [
            np.flatnonzero(np.abs(grid - x0) <= 2.0 * math.sqrt(rho) / w_scalar) for x0 in pts
        ]
        for _ in range(n_candidates):
            q_pts, q_probs = [], []
            for p, x0, win in zip(probs, pts, windows):
                parts = int(rng.integers(1, 4))
                idx = win[rng.integers(0, len(win), parts)]
                shares = -np.log(open_unit(rng, parts))
                shares = shares / shares.sum() * p
                q_pts.extend(grid[idx])
                q_probs.extend(shares)
            q_pts = np.asarray(q_pts)
            q_probs = np.asarray(q_probs)
            # merge duplicate grid points to keep the support distinct
            uniq, inv = np.unique(q_pts, return_inverse=True)
            merged = np.zeros(len(uniq))
            np.add.at(merged, inv, q_probs)
            merged = merged / merged.sum()
            Q = DiscreteDistribution(uniq[:, None], merged)
            kind = "sq_l2" if w_scalar == 1.0 else "weighted_sq_l2"
            w_arg = None if w_scalar == 1.0 else np.array([w_scalar])
            if wasserstein(Q, P0, kind, w_arg) <= rho + 1e-10:
                best_lhs = max(best_lhs, float(np.dot(merged, (y0 - theta * uniq) ** 2)))

        gap = best_lhs - rhs
        worst = max(worst, gap)
        if gap > tol:
            failures += 1
    return DualityReport(n_instances, worst, failures)
