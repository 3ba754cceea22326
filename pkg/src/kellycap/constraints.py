"""Portfolio-constraint correspondences built from a scalar pair (f, h).

A constraint set has the form

    F(x, mu, sigma) = { zeta : f(zeta' mu, ||zeta' sigma||) <= h(x) },

where ``f`` measures how aggressive the portfolio is in terms of its rate of
return and volatility, and ``h`` converts the current wealth ``x`` into a
compliance budget.  The built-in pairs encode the statements
"VaR / TVaR / LEL of the projected loss stays under a limit ``a``":

    kind    f(zmu, zsig)
    ----    -----------------------------------------------------------
    VaR     -tau*(r + zmu - zsig^2/2) - N^{-1}(alpha) * zsig * sqrt(tau)
    TVaR    log(alpha) - tau*(r + zmu) - log N(N^{-1}(alpha) - zsig*sqrt(tau))
    LEL     the TVaR expression with zmu dropped

    scope       h(x)
    --------    -------------------------------------------
    absolute    -log[(1 - a/x)^+]   (+inf for x <= a)
    relative    -log(1 - a)         (constant, a in (0,1))

``f`` is jointly convex, nonincreasing in ``zmu``, nondecreasing in ``zsig``,
satisfies f(0,0) = -r*tau < 0 and grows at least quadratically in ``zsig``;
``verify_axioms`` re-checks all of this numerically on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import log_norm_cdf, norm_quantile
from .risk import PortfolioStats, RiskKind, RiskParams

__all__ = [
    "ConstraintPair",
    "ConstraintSetQuery",
    "GridSpec",
    "AxiomReport",
    "f_eval",
    "h_eval",
    "g_eval",
    "is_admissible",
    "radius_bound",
    "fit_kappas",
    "verify_axioms",
]

Scope = str  # "absolute" | "relative" | "custom"


@dataclass(frozen=True)
class ConstraintPair:
    """An (f, h) pair: risk-measure kind, absolute/relative scope and limit.

    Use the ``absolute`` / ``relative`` / ``custom`` constructors.  For
    custom pairs, ``custom_f(zmu, zsig)`` and ``custom_h(x)`` are arbitrary
    callables; ``verify_axioms`` reports whether they qualify as a
    constraint correspondence.
    """

    kind: Optional[RiskKind]
    scope: Scope
    limit: float
    params: RiskParams
    custom_f: Optional[Callable[[float, float], float]] = None
    custom_h: Optional[Callable[[float], float]] = None

    @classmethod
    def absolute(
        cls, kind: RiskKind, limit: float, params: RiskParams
    ) -> "ConstraintPair":
        """Risk limit ``limit`` in currency; binds only for wealth above the
        threshold x0 = limit."""
        if not (limit > 0.0):
            raise ValueError(f"absolute limit must be positive, got {limit}")
        return cls(kind=kind, scope="absolute", limit=float(limit), params=params)

    @classmethod
    def relative(
        cls, kind: RiskKind, limit: float, params: RiskParams
    ) -> "ConstraintPair":
        """Risk limit as a fraction of current wealth, in (0, 1)."""
        if not (0.0 < limit < 1.0):
            raise ValueError(f"relative limit must lie in (0,1), got {limit}")
        return cls(kind=kind, scope="relative", limit=float(limit), params=params)

    @classmethod
    def custom(
        cls,
        f: Callable[[float, float], float],
        h: Callable[[float], float],
        params: RiskParams,
    ) -> "ConstraintPair":
        return cls(
            kind=None,
            scope="custom",
            limit=math.nan,
            params=params,
            custom_f=f,
            custom_h=h,
        )

    @property
    def x0(self) -> Optional[float]:
        """Wealth threshold below which the constraint never binds."""
        return self.limit if self.scope == "absolute" else None


@dataclass(frozen=True)
class ConstraintSetQuery:
    """Market coefficients and wealth level fixing one constraint set."""

    mu: np.ndarray
    sigma: np.ndarray
    wealth: float

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        n, m = sigma.shape
        if mu.shape != (n,):
            raise ValueError(
                f"mu has shape {mu.shape}, expected ({n},) to match sigma"
            )
        if np.linalg.matrix_rank(sigma) < n:
            raise ValueError("sigma must have full row rank")
        if not (self.wealth > 0.0):
            raise ValueError(f"wealth must be positive, got {self.wealth}")


def f_eval(pair: ConstraintPair, stats: PortfolioStats) -> float:
    """Compliance function f at (zeta_mu, zeta_sigma)."""
    p = pair.params
    if pair.scope == "custom":
        return float(pair.custom_f(stats.zeta_mu, stats.zeta_sigma))
    nq = norm_quantile(p.alpha)
    sq = math.sqrt(p.tau)
    if pair.kind is RiskKind.VAR:
        qt = p.r + stats.zeta_mu - 0.5 * stats.zeta_sigma**2
        return -p.tau * qt - nq * stats.zeta_sigma * sq
    if pair.kind is RiskKind.TVAR:
        return (
            math.log(p.alpha)
            - p.tau * (p.r + stats.zeta_mu)
            - log_norm_cdf(nq - stats.zeta_sigma * sq)
        )
    if pair.kind is RiskKind.LEL:
        return (
            math.log(p.alpha)
            - p.tau * p.r
            - log_norm_cdf(nq - stats.zeta_sigma * sq)
        )
    raise ValueError(f"unknown kind {pair.kind!r}")


def h_eval(pair: ConstraintPair, x: float) -> float:
    """Compliance budget h(x); +inf means the constraint cannot bind."""
    x = float(x)
    if not (x > 0.0):
        raise ValueError(f"wealth must be positive, got {x}")
    if pair.scope == "custom":
        return float(pair.custom_h(x))
    if pair.scope == "relative":
        return -math.log1p(-pair.limit)
    if x <= pair.limit:
        return math.inf
    return -math.log1p(-pair.limit / x)


def g_eval(pair: ConstraintPair, lam: float, beta: float) -> float:
    """Compliance of the scaled Merton portfolio: f(beta*lam^2, beta*lam).

    Convex in ``beta`` with g(0) = f(0,0) < 0 and g -> +inf, so any level
    above f(0,0) is crossed exactly once.
    """
    if lam < 0.0 or beta < 0.0:
        raise ValueError("lam and beta must be non-negative")
    return f_eval(
        pair, PortfolioStats(zeta_mu=beta * lam * lam, zeta_sigma=beta * lam)
    )


def portfolio_stats_of(
    zeta: np.ndarray, mu: np.ndarray, sigma: np.ndarray
) -> PortfolioStats:
    """(zeta' mu, ||zeta' sigma||) for a proportion vector."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != mu.shape:
        raise ValueError(
            f"zeta has shape {zeta.shape}, expected {mu.shape}"
        )
    return PortfolioStats(
        zeta_mu=float(zeta @ mu),
        zeta_sigma=float(np.linalg.norm(zeta @ sigma)),
    )


def is_admissible(
    pair: ConstraintPair, query: ConstraintSetQuery, zeta: np.ndarray
) -> bool:
    """Membership of ``zeta`` in F(wealth, mu, sigma)."""
    stats = portfolio_stats_of(zeta, query.mu, query.sigma)
    return f_eval(pair, stats) <= h_eval(pair, query.wealth)


def builtin_kappas(pair: ConstraintPair) -> tuple:
    """Quadratic-lower-bound constants (kappa1, kappa2, kappa3) with
    f >= kappa1*zsig^2 - kappa2*zmu - kappa3.

    For VaR this holds exactly after dropping the non-negative
    |N^{-1}(alpha)| term; for TVaR the Chernoff bound
    N(u) <= exp(-u^2/2), u <= 0 does the job.  LEL has no zmu dependence,
    so its bound is fitted on the verification grid (the kappa3 below
    absorbs kappa2 * |zmu| over zmu >= -GRID_ZMU_BOUND).
    """
    p = pair.params
    if pair.kind is RiskKind.VAR:
        return (0.5 * p.tau, p.tau, p.r * p.tau)
    if pair.kind is RiskKind.TVAR:
        return (0.5 * p.tau, p.tau, p.r * p.tau - math.log(p.alpha))
    if pair.kind is RiskKind.LEL:
        return (
            0.5 * p.tau,
            p.tau,
            p.r * p.tau - math.log(p.alpha) + p.tau * GRID_ZMU_BOUND,
        )
    raise ValueError("no built-in kappas for custom pairs; use fit_kappas")


GRID_ZMU_BOUND = 2.0
GRID_ZSIG_BOUND = 5.0


@dataclass(frozen=True)
class GridSpec:
    """Verification grid: zmu in [-zmu_bound, zmu_bound],
    zsig in [0, zsig_bound]."""

    zmu_bound: float = GRID_ZMU_BOUND
    zsig_bound: float = GRID_ZSIG_BOUND
    n: int = 41

    def axes(self) -> tuple:
        return (
            np.linspace(-self.zmu_bound, self.zmu_bound, self.n),
            np.linspace(0.0, self.zsig_bound, self.n),
        )


def _f_grid(pair: ConstraintPair, grid: GridSpec) -> tuple:
    zmu_ax, zsig_ax = grid.axes()
    vals = np.empty((grid.n, grid.n))
    for i, zmu in enumerate(zmu_ax):
        for j, zsig in enumerate(zsig_ax):
            vals[i, j] = f_eval(pair, PortfolioStats(zmu, zsig))
    return zmu_ax, zsig_ax, vals


def fit_kappas(pair: ConstraintPair, grid: Optional[GridSpec] = None) -> tuple:
    """kappa constants for a pair: analytic for the built-in kinds,
    least-slack numeric fit on the grid for custom pairs."""
    if pair.scope != "custom":
        return builtin_kappas(pair)
    grid = grid or GridSpec()
    zmu_ax, zsig_ax, vals = _f_grid(pair, grid)
    # steepest decrease of f in zmu fixes kappa2
    dmu = np.diff(vals, axis=0) / np.diff(zmu_ax)[:, None]
    kappa2 = max(1e-9, float(-dmu.min()))
    # profile out zmu, then fit the largest quadratic under the profile
    profile = (vals + kappa2 * zmu_ax[:, None]).min(axis=0)
    pos = zsig_ax > 0.5 * grid.zsig_bound
    curv = (profile[pos] - profile[0]) / zsig_ax[pos] ** 2
    kappa1 = max(1e-9, 0.5 * float(curv.min()))
    slack = kappa1 * zsig_ax[None, :] ** 2 - kappa2 * zmu_ax[:, None] - vals
    kappa3 = max(1e-9, float(slack.max()) * (1.0 + 1e-9) + 1e-12)
    return (kappa1, kappa2, kappa3)


def radius_bound(pair: ConstraintPair, lam: float, hval: float) -> float:
    """Upper bound on ||zeta' sigma|| over the constraint set with budget
    ``hval``: C1 * lam + C2 * sqrt(hval + C3).

    Follows from the quadratic lower bound on f and the Cauchy-Schwarz
    estimate zeta' mu <= lam * ||zeta' sigma||, with C1 = kappa2/kappa1,
    C2 = 1/sqrt(kappa1), C3 = kappa3.
    """
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    if math.isinf(hval):
        return math.inf
    k1, k2, k3 = fit_kappas(pair)
    return (k2 / k1) * lam + math.sqrt(max(0.0, hval + k3) / k1)


@dataclass
class AxiomReport:
    """Outcome of the numerical axiom verification for a pair."""

    origin_negative: bool
    monotone_in_zmu: bool
    monotone_in_zsig: bool
    convex: bool
    lower_bound_holds: bool
    kappas: tuple
    max_convexity_violation: float
    max_lower_bound_violation: float
    grid: GridSpec
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_axioms(
    pair: ConstraintPair,
    grid: Optional[GridSpec] = None,
    midpoint_samples: int = 400,
    seed: int = 20260808,
) -> AxiomReport:
    """Check the defining properties of (f, h) on a grid: sign of f(0,0),
    monotonicity of both sections, midpoint convexity and the quadratic
    lower bound.  Failures are collected in the report rather than raised.
    """
    grid = grid or GridSpec()
    zmu_ax, zsig_ax, vals = _f_grid(pair, grid)
    tol = 1e-9

    failures = []
    origin_ok = f_eval(pair, PortfolioStats(0.0, 0.0)) < 0.0
    if not origin_ok:
        failures.append("f(0,0) >= 0")

    mono_mu = bool((np.diff(vals, axis=0) <= tol).all())
    if not mono_mu:
        failures.append("f increasing somewhere in zeta_mu")
    mono_sig = bool((np.diff(vals, axis=1) >= -tol).all())
    if not mono_sig:
        failures.append("f decreasing somewhere in zeta_sigma")

    rng = np.random.default_rng(seed)
    worst_convex = 0.0
    for _ in range(midpoint_samples):
        zmu1, zmu2 = rng.uniform(-grid.zmu_bound, grid.zmu_bound, size=2)
        zs1, zs2 = rng.uniform(0.0, grid.zsig_bound, size=2)
        fm = f_eval(
            pair, PortfolioStats(0.5 * (zmu1 + zmu2), 0.5 * (zs1 + zs2))
        )
        favg = 0.5 * (
            f_eval(pair, PortfolioStats(zmu1, zs1))
            + f_eval(pair, PortfolioStats(zmu2, zs2))
        )
        worst_convex = max(worst_convex, fm - favg)
    convex_ok = worst_convex <= tol
    if not convex_ok:
        failures.append(f"midpoint convexity violated by {worst_convex:.3e}")

    kappas = fit_kappas(pair, grid)
    k1, k2, k3 = kappas
    bound = k1 * zsig_ax[None, :] ** 2 - k2 * zmu_ax[:, None] - k3
    worst_lb = float((bound - vals).max())
    lb_ok = worst_lb <= tol
    if not lb_ok:
        failures.append(f"quadratic lower bound violated by {worst_lb:.3e}")

    return AxiomReport(
        origin_negative=origin_ok,
        monotone_in_zmu=mono_mu,
        monotone_in_zsig=mono_sig,
        convex=convex_ok,
        lower_bound_holds=lb_ok,
        kappas=kappas,
        max_convexity_violation=worst_convex,
        max_lower_bound_violation=worst_lb,
        grid=grid,
        failures=failures,
    )
