"""Merton proportion and its projection onto a constraint set.

The unconstrained growth-optimal proportions solve
``sigma sigma' zeta_M = mu``; under the metric
``d_sigma(z1, z2) = ||sigma' (z1 - z2)||`` the optimal constrained policy is
the d_sigma-projection of ``zeta_M`` onto the constraint set, which is
always a scalar multiple ``beta * zeta_M`` with ``beta`` in (0, 1].  The
scalar is found by root-finding on the convex compliance function
``g(beta) = f(beta lam^2, beta lam)`` where ``lam = ||zeta_M' sigma||``:

* ``beta_of(pair, lam, h)``   -- projection onto the budget-h set
* ``delta(pair, lam)``        -- projection onto the limiting set (h = 0)
* ``delta_star(pair, lam, x)``-- projection onto the current set (h = h(x))

``oracle_project`` solves the same projection as a generic constrained
minimization (multi-start SLSQP, dense direction scan for n <= 2) without
assuming collinearity; it exists purely to validate the root-finding route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .constraints import (
    ConstraintPair,
    ConstraintSetQuery,
    f_eval,
    g_eval,
    h_eval,
    portfolio_stats_of,
    radius_bound,
)
from .numerics import RootBracket, solve_increasing_root
from .risk import PortfolioStats

__all__ = [
    "MertonData",
    "ProjectionResult",
    "LipschitzReport",
    "SingularMarketError",
    "merton_proportion",
    "d_sigma",
    "beta_of",
    "delta",
    "delta_star",
    "project_merton",
    "oracle_project",
    "lipschitz_report",
]

_COND_LIMIT = 1e12
_RESIDUAL_LIMIT = 1e-10


class SingularMarketError(ValueError):
    """sigma sigma' is numerically singular (redundant assets)."""


@dataclass(frozen=True)
class MertonData:
    """Merton proportions and their sigma-norm lam = ||zeta_M' sigma||."""

    zeta_m: np.ndarray
    lam: float


def merton_proportion(mu: np.ndarray, sigma: np.ndarray) -> MertonData:
    """Solve the SPD system sigma sigma' zeta = mu by Cholesky factorization.

    Raises ``SingularMarketError`` when the Gram matrix has condition number
    above 1e12; the solution must reproduce mu with relative residual below
    1e-10 or the same error is raised.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    n, m = sigma.shape
    if mu.shape != (n,):
        raise ValueError(f"mu has shape {mu.shape}, expected ({n},)")
    gram = sigma @ sigma.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularMarketError(f"sigma sigma' not positive definite: {exc}")
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise SingularMarketError(
            f"sigma sigma' condition number exceeds {_COND_LIMIT:.0e}"
        )
    y = solve_triangular(chol, mu, lower=True)
    zeta = solve_triangular(chol.T, y, lower=False)
    residual = float(np.linalg.norm(gram @ zeta - mu))
    scale = max(float(np.linalg.norm(mu)), np.finfo(float).tiny)
    if residual > _RESIDUAL_LIMIT * scale:
        raise SingularMarketError(
            f"solve residual {residual:.3e} exceeds {_RESIDUAL_LIMIT:.0e} * ||mu||"
        )
    lam = float(np.linalg.norm(zeta @ sigma))
    return MertonData(zeta_m=zeta, lam=lam)


def d_sigma(zeta1: np.ndarray, zeta2: np.ndarray, sigma: np.ndarray) -> float:
    """The metric ||sigma' (zeta1 - zeta2)|| on proportion vectors."""
    zeta1 = np.asarray(zeta1, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if zeta1.shape != zeta2.shape or zeta1.shape != (sigma.shape[0],):
        raise ValueError(
            f"dimension mismatch: {zeta1.shape}, {zeta2.shape}, sigma {sigma.shape}"
        )
    return float(np.linalg.norm((zeta1 - zeta2) @ sigma))


def beta_of(pair: ConstraintPair, lam: float, hval: float) -> float:
    """Scaling factor of the projection: 1 when the budget is infinite or
    the Merton point already complies, otherwise the unique root of
    g(beta) = hval in (0, 1)."""
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    if math.isinf(hval) or lam == 0.0:
        return 1.0
    if g_eval(pair, lam, 1.0) <= hval:
        return 1.0
    return solve_increasing_root(
        lambda b: g_eval(pair, lam, b) - hval,
        RootBracket(0.0, 1.0, tol_abs=1e-14, tol_rel=1e-14),
    )


def delta(pair: ConstraintPair, lam: float) -> float:
    """Limiting (wealth -> infinity) scaling factor: root of g(beta) = 0,
    clamped at 1.  A deterministic function of lam alone."""
    return beta_of(pair, lam, 0.0)


def delta_star(pair: ConstraintPair, lam: float, x: float) -> float:
    """Current scaling factor at wealth x: root of g(beta) = h(x), clamped
    at 1; equals 1 below the threshold x0 and tends to delta as x grows."""
    return beta_of(pair, lam, h_eval(pair, x))


@dataclass(frozen=True)
class ProjectionResult:
    """beta in (0,1], the projected proportions beta * zeta_M, and whether
    the constraint binds (beta < 1)."""

    beta: float
    zeta_proj: np.ndarray
    binding: bool


def project_merton(
    pair: ConstraintPair, query: ConstraintSetQuery
) -> ProjectionResult:
    md = merton_proportion(query.mu, query.sigma)
    beta = beta_of(pair, md.lam, h_eval(pair, query.wealth))
    return ProjectionResult(
        beta=beta, zeta_proj=beta * md.zeta_m, binding=beta < 1.0
    )


def _feasible_scale(
    pair: ConstraintPair, query: ConstraintSetQuery, direction: np.ndarray
) -> float:
    """Largest t >= 0 with t * direction still admissible (the admissible
    t's along any ray form an interval since the set is convex and contains
    the origin)."""
    hval = h_eval(pair, query.wealth)

    def compliance(t: float) -> float:
        stats = portfolio_stats_of(t * direction, query.mu, query.sigma)
        return f_eval(pair, stats) - hval

    t_hi = 1.0
    for _ in range(200):
        if compliance(t_hi) > 0.0:
            break
        t_hi *= 2.0
    else:
        return math.inf
    return solve_increasing_root(compliance, RootBracket(0.0, t_hi))


def oracle_project(
    pair: ConstraintPair,
    query: ConstraintSetQuery,
    n_starts: int = 8,
    seed: int = 0,
    scan_points: int = 720,
) -> np.ndarray:
    """Best-effort numerical d_sigma-projection of zeta_M, independent of
    the collinearity result.

    Requires a finite budget h(wealth) (compact constraint set).  Runs SLSQP
    from several interior starts (plus a dense direction scan for n <= 2)
    and returns the best admissible point found.
    """
    md = merton_proportion(query.mu, query.sigma)
    hval = h_eval(pair, query.wealth)
    if math.isinf(hval):
        raise ValueError("oracle_project requires a finite budget h(x)")
    sigma = query.sigma
    mu = query.mu
    stats_m = portfolio_stats_of(md.zeta_m, mu, sigma)
    if f_eval(pair, stats_m) <= hval:
        return md.zeta_m.copy()

    def objective(z: np.ndarray) -> float:
        diff = (z - md.zeta_m) @ sigma
        return float(diff @ diff)

    def compliance(z: np.ndarray) -> float:
        return hval - f_eval(pair, portfolio_stats_of(z, mu, sigma))

    n = md.zeta_m.shape[0]
    rng = np.random.default_rng(seed)
    starts = []
    t_merton = _feasible_scale(pair, query, md.zeta_m)
    starts.append(0.999 * t_merton * md.zeta_m)
    for _ in range(max(0, n_starts - 1)):
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        t = _feasible_scale(pair, query, direction)
        if math.isinf(t):
            continue
        starts.append(rng.uniform(0.3, 0.98) * t * direction)

    if n <= 2:
        starts.extend(_boundary_scan(pair, query, md, scan_points))

    def restore(z: np.ndarray) -> Optional[np.ndarray]:
        """Pull a candidate radially back inside the set (the set contains 0
        and is convex, so the admissible scalings of z form an interval)."""
        if compliance(z) >= 0.0:
            return z
        lo, hi = 0.0, 1.0
        if compliance(np.zeros_like(z)) < 0.0:
            return None
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if compliance(mid * z) >= 0.0:
                lo = mid
            else:
                hi = mid
        return lo * z

    best = None
    best_val = math.inf
    for z0 in starts:
        res = minimize(
            objective,
            z0,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": compliance}],
            options={"maxiter": 400, "ftol": 1e-16},
        )
        z = restore(np.asarray(res.x, dtype=float))
        if z is None:
            continue
        val = objective(z)
        if val < best_val:
            best_val = val
            best = z
    if best is None:
        # every polish failed; fall back to the scaled Merton interior point
        best = 0.999 * t_merton * md.zeta_m
    return np.asarray(best, dtype=float)


def _boundary_scan(
    pair: ConstraintPair,
    query: ConstraintSetQuery,
    md: MertonData,
    scan_points: int,
) -> Iterable[np.ndarray]:
    """Dense direction scan (binding case: the minimizer is on the
    boundary).  n = 1 scans both rays, n = 2 scans a uniform angle grid;
    the few best boundary points are handed to the local polish."""
    n = md.zeta_m.shape[0]
    if n == 1:
        dirs = [np.array([1.0]), np.array([-1.0])]
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, scan_points, endpoint=False)
        dirs = [np.array([math.cos(a), math.sin(a)]) for a in angles]
    scored = []
    for direction in dirs:
        t = _feasible_scale(pair, query, direction)
        if math.isinf(t):
            continue
        z = t * direction
        scored.append((d_sigma(z, md.zeta_m, query.sigma), z))
    scored.sort(key=lambda item: item[0])
    return [z for _, z in scored[:5]]


@dataclass(frozen=True)
class LipschitzReport:
    """Empirical Lipschitz scan of y -> beta(lam, e^y) over a wealth band."""

    max_ratio: float
    theoretical_bound: float
    n_pairs: int
    wealth_range: Tuple[float, float]
    blowup: bool


def lipschitz_report(
    pair: ConstraintPair,
    lambdas: Sequence[float],
    wealth_pairs: Sequence[Tuple[float, float]],
) -> LipschitzReport:
    """Max of |beta(lam, x1) - beta(lam, x2)| / |log x1 - log x2| over the
    given lambdas and wealth pairs, against the analytic bound
    a / ((x_min - a) * (-f(0,0))) valid on the band.

    Only meaningful for absolute pairs (relative budgets do not depend on
    wealth); all wealths must exceed the threshold x0.
    """
    if pair.x0 is None:
        raise ValueError("lipschitz_report requires an absolute pair")
    a = pair.x0
    xs = [x for pr in wealth_pairs for x in pr]
    if min(xs) <= a:
        raise ValueError("all wealths must exceed the threshold x0")
    x_min, x_max = min(xs), max(xs)
    neg_f00 = -f_eval(pair, PortfolioStats(0.0, 0.0))
    bound = a / ((x_min - a) * neg_f00)
    max_ratio = 0.0
    count = 0
    for lam in lambdas:
        for x1, x2 in wealth_pairs:
            dy = abs(math.log(x1) - math.log(x2))
            if dy == 0.0:
                continue
            db = abs(delta_star(pair, lam, x1) - delta_star(pair, lam, x2))
            max_ratio = max(max_ratio, db / dy)
            count += 1
    return LipschitzReport(
        max_ratio=max_ratio,
        theoretical_bound=bound,
        n_pairs=count,
        wealth_range=(x_min, x_max),
        blowup=max_ratio > bound * (1.0 + 1e-9),
    )
