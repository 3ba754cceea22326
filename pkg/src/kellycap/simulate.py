"""Discretized simulation of constrained-wealth dynamics.

Log wealth follows Euler-Maruyama on

    dY = Q(t, zeta) dt + zeta' sigma dW,
    Q(t, zeta) = r + zeta' mu - ||zeta' sigma||^2 / 2,

with the strategy evaluated at each step's left endpoint.  All built-in
strategies hold a multiple ``beta`` of the Merton proportions, so a path
needs only the scalar pair (lam, beta) per step; ``beta`` is re-solved from
the current wealth where the strategy demands it (``ProjectedCurrent``).
Strategies in one batch share the Brownian increments (common random
numbers), which is what makes the optimality comparisons sharp.

Reproducibility: paths are laid out in fixed-width chunks, each chunk
drawing from its own generator seeded by (seed, chunk index), so results
are independent of how chunks are scheduled; ``KELLYCAP_THREADS`` sets the
number of worker threads mapping chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _engine
from ._engine.common import (
    H_ABSOLUTE,
    H_CONSTANT,
    KIND_LEL,
    KIND_TVAR,
    KIND_VAR,
    MARKET_CONSTANT,
    MARKET_LAMBDA_PATH,
    MARKET_OU,
    STRAT_CURRENT,
    STRAT_FIXED,
    STRAT_LIMIT,
    STRAT_SCHEDULE,
    EngineSpec,
)
from .constraints import ConstraintPair, h_eval
from .market import (
    ConstantMarket,
    MarketModel,
    OUStochVolMarket,
    PeriodicMarket,
    _periodic_lambda_grid,
    coefficients_at,
    lambda_at,
)
from .projection import merton_proportion
from .risk import RiskKind

__all__ = [
    "SimConfig",
    "PathResult",
    "BatchResult",
    "MertonUnconstrained",
    "ProjectedCurrent",
    "ProjectedLimiting",
    "RelativeProjected",
    "FixedFraction",
    "FractionSchedule",
    "CustomRule",
    "StrategyRule",
    "StoppingSpec",
    "AdmissibilityError",
    "simulate_batch",
    "simulate_path",
    "growth_rate",
    "batch_growth",
    "check_transience",
    "CoalescenceReport",
    "beta_coalescence_report",
    "SupermartingaleReport",
    "supermartingale_check",
    "LogDominanceReport",
    "finite_horizon_log_check",
    "growth_targets",
    "beta_rel",
]

_CHUNK_WIDTH_CAP = 512


class AdmissibilityError(RuntimeError):
    """A test strategy left the constraint set during simulation."""


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    dt: float
    paths: int
    seed: int
    x0_wealth: float
    record_stride: int = 1

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and self.horizon >= self.dt):
            raise ValueError("need dt > 0 and horizon >= dt")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not (self.x0_wealth > 0.0):
            raise ValueError("x0_wealth must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


# ---------------------------------------------------------------------------
# strategy rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MertonUnconstrained:
    tag: str = "merton"


@dataclass(frozen=True)
class ProjectedCurrent:
    """beta(t, X_t) from the current constraint set (feedback on wealth in
    the absolute case)."""

    tag: str = "projected_current"


@dataclass(frozen=True)
class ProjectedLimiting:
    """beta_inf(t) from the limiting constraint set (budget inf_x h(x): zero
    for absolute pairs, the constant budget for relative ones)."""

    tag: str = "projected_limiting"


@dataclass(frozen=True)
class RelativeProjected:
    """Projection onto a relative (wealth-independent) constraint set."""

    tag: str = "relative_projected"


@dataclass(frozen=True)
class FixedFraction:
    c: float
    tag: str = ""

    def __post_init__(self) -> None:
        if self.c < 0.0:
            raise ValueError("fraction must be non-negative")
        if not self.tag:
            object.__setattr__(self, "tag", f"fixed_{self.c:g}")


@dataclass(frozen=True)
class FractionSchedule:
    """Deterministic time-varying multiple of the Merton proportions."""

    fn: Callable[[float], float]
    tag: str = "schedule"


@dataclass(frozen=True)
class CustomRule:
    """Arbitrary proportion vector as a function of (t, state, wealth).

    Runs on the full vector dynamics (Python stepping, not the compiled
    kernel); intended for small verification runs, not large batches.
    """

    fn: Callable[[float, float, float], np.ndarray]
    tag: str = "custom"


StrategyRule = Union[
    MertonUnconstrained,
    ProjectedCurrent,
    ProjectedLimiting,
    RelativeProjected,
    FixedFraction,
    FractionSchedule,
    CustomRule,
]


@dataclass(frozen=True)
class StoppingSpec:
    """Bounded stopping rule: fixed horizon, or the first time the monitored
    strategy's wealth reaches ``level_multiple * x0`` (capped at the
    horizon)."""

    kind: str = "fixed"  # "fixed" | "hitting"
    level_multiple: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "hitting"):
            raise ValueError("stopping kind must be 'fixed' or 'hitting'")
        if self.kind == "hitting" and not (self.level_multiple > 0.0):
            raise ValueError("level_multiple must be positive")


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class PathResult:
    times: np.ndarray
    log_wealth: np.ndarray
    beta_series: np.ndarray
    growth_estimate: float
    strategy_tag: str


@dataclass
class BatchResult:
    """Common-noise batch over strategies x paths."""

    times: np.ndarray  # [R]
    log_wealth: np.ndarray  # [S, R, P]
    beta_series: np.ndarray  # [S, R, P]
    y_final: np.ndarray  # [S, P]
    drift_sum: np.ndarray  # [S, P]
    y_at_stop: np.ndarray  # [S, P]
    stop_step: np.ndarray  # [P]
    viol_step: np.ndarray  # [S]
    v_final: Optional[np.ndarray]
    tags: List[str]
    cfg: SimConfig

    def path(self, strategy: int, path_index: int, burn_in: float = 0.0) -> PathResult:
        res = PathResult(
            times=self.times,
            log_wealth=self.log_wealth[strategy, :, path_index].copy(),
            beta_series=self.beta_series[strategy, :, path_index].copy(),
            growth_estimate=math.nan,
            strategy_tag=self.tags[strategy],
        )
        res.growth_estimate = growth_rate(res, burn_in)
        return res


# ---------------------------------------------------------------------------
# batch construction
# ---------------------------------------------------------------------------


def _pair_fields(pair: Optional[ConstraintPair]) -> Tuple[int, int, float, float, float, float, float]:
    if pair is None:
        # unconstrained runs never solve for beta; keep benign placeholders
        return KIND_VAR, H_CONSTANT, math.inf, 1.0, 0.05, 1.0, 0.03
    if pair.scope == "custom":
        raise ValueError("custom constraint pairs are not simulatable")
    kind_code = {
        RiskKind.VAR: KIND_VAR,
        RiskKind.TVAR: KIND_TVAR,
        RiskKind.LEL: KIND_LEL,
    }[pair.kind]
    if pair.scope == "relative":
        return (
            kind_code,
            H_CONSTANT,
            h_eval(pair, 1.0),
            1.0,
            pair.params.alpha,
            pair.params.tau,
            pair.params.r,
        )
    return (
        kind_code,
        H_ABSOLUTE,
        math.inf,
        pair.limit,
        pair.params.alpha,
        pair.params.tau,
        pair.params.r,
    )


def _strategy_codes(
    rules: Sequence[StrategyRule],
    pair: Optional[ConstraintPair],
    n_steps: int,
    dt: float,
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], List[str]]:
    codes = np.zeros(len(rules), dtype=np.int64)
    fracs = np.zeros(len(rules))
    frac_paths: Optional[np.ndarray] = None
    tags = []
    for i, rule in enumerate(rules):
        tags.append(rule.tag)
        if isinstance(rule, MertonUnconstrained):
            codes[i], fracs[i] = STRAT_FIXED, 1.0
        elif isinstance(rule, FixedFraction):
            codes[i], fracs[i] = STRAT_FIXED, rule.c
        elif isinstance(rule, (ProjectedCurrent, RelativeProjected)):
            if pair is None:
                raise ValueError(f"{rule.tag} requires a constraint pair")
            if isinstance(rule, RelativeProjected) and pair.scope != "relative":
                raise ValueError("RelativeProjected requires a relative pair")
            codes[i] = STRAT_CURRENT
        elif isinstance(rule, ProjectedLimiting):
            if pair is None:
                raise ValueError("ProjectedLimiting requires a constraint pair")
            codes[i] = STRAT_LIMIT
        elif isinstance(rule, FractionSchedule):
            codes[i] = STRAT_SCHEDULE
            if frac_paths is None:
                frac_paths = np.zeros((len(rules), n_steps))
            frac_paths[i] = [rule.fn(k * dt) for k in range(n_steps)]
        else:
            raise TypeError(f"unsupported strategy rule {rule!r}")
    return codes, fracs, frac_paths, tags


def _market_fields(model: MarketModel, n_steps: int, dt: float) -> dict:
    if isinstance(model, ConstantMarket):
        md = merton_proportion(model.point.mu, model.point.sigma)
        return dict(
            market_code=MARKET_CONSTANT,
            lam_const=md.lam,
            lam_path=None,
            r=model.point.r,
            ou_nu=1.0,
            ou_vbar=0.0,
            ou_v0=0.0,
            ou_rho=0.0,
            ou_mu_abs=0.0,
            ou_sig_lo=0.1,
            ou_sig_hi=0.6,
            vol_map=None,
        )
    if isinstance(model, PeriodicMarket):
        lam_path = _periodic_lambda_grid(model, n_steps, dt)
        r = model.point_fn(0.0).r
        return dict(
            market_code=MARKET_LAMBDA_PATH,
            lam_const=0.0,
            lam_path=lam_path,
            r=r,
            ou_nu=1.0,
            ou_vbar=0.0,
            ou_v0=0.0,
            ou_rho=0.0,
            ou_mu_abs=0.0,
            ou_sig_lo=0.1,
            ou_sig_hi=0.6,
            vol_map=None,
        )
    if isinstance(model, OUStochVolMarket):
        return dict(
            market_code=MARKET_OU,
            lam_const=0.0,
            lam_path=None,
            r=model.r,
            ou_nu=model.nu,
            ou_vbar=model.vbar,
            ou_v0=model.v0,
            ou_rho=model.rho,
            ou_mu_abs=abs(model.mu_scalar),
            ou_sig_lo=model.sig_lo,
            ou_sig_hi=model.sig_hi,
            vol_map=model.vol_map,
        )
    raise TypeError(f"unsupported market model {model!r}")


def _record_indices(n_steps: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n_steps, stride, dtype=np.int64)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def _thread_count() -> int:
    raw = os.environ.get("KELLYCAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def simulate_batch(
    model: MarketModel,
    pair: Optional[ConstraintPair],
    rules: Sequence[StrategyRule],
    cfg: SimConfig,
    stop: Optional[StoppingSpec] = None,
    check_admissible: bool = False,
) -> BatchResult:
    """Simulate all strategies over all paths under common noise.

    Raises ``AdmissibilityError`` when ``check_admissible`` is set and some
    strategy leaves the constraint set (the failing strategy and step are
    named).
    """
    if any(isinstance(rule, CustomRule) for rule in rules):
        return _vector_batch(model, pair, rules, cfg, stop, check_admissible)
    n_steps = cfg.n_steps
    kind_code, h_mode, h_const, a_abs, alpha, tau, r_risk = _pair_fields(pair)
    codes, fracs, frac_paths, tags = _strategy_codes(rules, pair, n_steps, cfg.dt)
    market_fields = _market_fields(model, n_steps, cfg.dt)
    rec_idx = _record_indices(n_steps, cfg.record_stride)

    if stop is not None and stop.kind == "hitting":
        stop_level_y = math.log(cfg.x0_wealth * stop.level_multiple)
    else:
        stop_level_y = math.nan

    spec = EngineSpec(
        **market_fields,
        kind_code=kind_code,
        h_mode=h_mode,
        h_const=h_const,
        a_abs=a_abs,
        alpha=alpha,
        tau=tau,
        strat_codes=codes,
        strat_frac=fracs,
        frac_paths=frac_paths,
        n_steps=n_steps,
        dt=cfg.dt,
        y0=math.log(cfg.x0_wealth),
        rec_idx=rec_idx,
        stop_level_y=stop_level_y,
        stop_strat=0,
        check_admissible=check_admissible,
    )
    # risk-measure r is the market riskless rate; keep them aligned
    if pair is not None and not math.isclose(spec.r, r_risk, rel_tol=1e-12):
        raise ValueError(
            f"constraint params use r={r_risk} but the market has r={spec.r}"
        )

    width = min(cfg.paths, _CHUNK_WIDTH_CAP)
    chunk_starts = list(range(0, cfg.paths, width))

    def run(ci: int):
        start = chunk_starts[ci]
        n_local = min(width, cfg.paths - start)
        rng = np.random.default_rng(
            np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, 0xC0FFEE, ci])
        )
        return _engine.run_chunk(spec, n_local, width, rng)

    workers = min(_thread_count(), len(chunk_starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(len(chunk_starts))))
    else:
        chunks = [run(ci) for ci in range(len(chunk_starts))]

    S = len(rules)
    viol = np.full(S, -1, dtype=np.int64)
    for ch in chunks:
        mask = (ch.viol_step >= 0) & ((viol < 0) | (ch.viol_step < viol))
        viol[mask] = ch.viol_step[mask]
    if check_admissible and (viol >= 0).any():
        s = int(np.argmax(viol >= 0))
        raise AdmissibilityError(
            f"strategy '{tags[s]}' violates the constraint at step "
            f"{int(viol[s])} (t={viol[s] * cfg.dt:g})"
        )

    result = BatchResult(
        times=rec_idx * cfg.dt,
        log_wealth=np.concatenate([c.y_rec for c in chunks], axis=2),
        beta_series=np.concatenate([c.beta_rec for c in chunks], axis=2),
        y_final=np.concatenate([c.y_final for c in chunks], axis=1),
        drift_sum=np.concatenate([c.drift_sum for c in chunks], axis=1),
        y_at_stop=np.concatenate([c.y_at_stop for c in chunks], axis=1),
        stop_step=np.concatenate([c.stop_step for c in chunks]),
        viol_step=viol,
        v_final=(
            np.concatenate([c.v_final for c in chunks])
            if chunks[0].v_final is not None
            else None
        ),
        tags=tags,
        cfg=cfg,
    )
    return result


def _vector_batch(
    model: MarketModel,
    pair: Optional[ConstraintPair],
    rules: Sequence[StrategyRule],
    cfg: SimConfig,
    stop: Optional[StoppingSpec],
    check_admissible: bool,
) -> BatchResult:
    """Full vector dynamics for batches containing ``CustomRule`` strategies:
    dY = (r + zeta' mu - ||zeta' sigma||^2 / 2) dt + zeta' sigma dW with an
    m-dimensional Brownian draw.  Built-in rules in the same batch share the
    draws, so comparisons stay paired.  Pure Python stepping; meant for
    verification-scale runs."""
    from .constraints import f_eval, portfolio_stats_of
    from .projection import beta_of

    for rule in rules:
        needs_pair = isinstance(
            rule, (ProjectedCurrent, ProjectedLimiting, RelativeProjected)
        )
        if needs_pair and pair is None:
            raise ValueError(f"{rule.tag} requires a constraint pair")
        if isinstance(rule, RelativeProjected) and pair.scope != "relative":
            raise ValueError("RelativeProjected requires a relative pair")
    if pair is not None and pair.scope == "custom":
        raise ValueError("custom constraint pairs are not simulatable")

    n_steps = cfg.n_steps
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    rec_idx = _record_indices(n_steps, cfg.record_stride)
    rng = np.random.default_rng(
        np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, 0xC0FFEE, 0])
    )
    ou = isinstance(model, OUStochVolMarket)
    state0 = model.v0 if ou else 0.0
    point0 = coefficients_at(model, 0.0, state0)
    n, m = point0.sigma.shape
    S, P = len(rules), cfg.paths
    tags = [rule.tag for rule in rules]

    y = np.full((S, P), math.log(cfg.x0_wealth))
    v = np.full(P, state0) if ou else None
    drift_sum = np.zeros((S, P))
    R = len(rec_idx)
    y_rec = np.empty((S, R, P))
    beta_rec = np.full((S, R, P), np.nan)
    y_at_stop = np.full((S, P), np.nan)
    stop_step = np.full(P, -1, dtype=np.int64)
    viol_step = np.full(S, -1, dtype=np.int64)
    stopped = np.zeros(P, dtype=bool)
    stop_level_y = (
        math.log(cfg.x0_wealth * stop.level_multiple)
        if stop is not None and stop.kind == "hitting"
        else math.nan
    )
    use_stop = not math.isnan(stop_level_y)

    if ou:
        decay = math.exp(-model.nu * dt)
        vscale = math.sqrt(-math.expm1(-2.0 * model.nu * dt) / (2.0 * model.nu))
        rho, rho_c = model.rho, math.sqrt(1.0 - model.rho**2)

    beta_cache: dict = {}

    def solve_beta(lam: float, hval: float) -> float:
        key = (lam, hval)
        if key not in beta_cache:
            beta_cache[key] = beta_of(pair, lam, hval)
        return beta_cache[key]

    h_limit = (
        0.0 if (pair is not None and pair.scope == "absolute") else
        (h_eval(pair, 1.0) if pair is not None else math.inf)
    )

    rec_ptr = 0
    for k in range(n_steps):
        t = k * dt
        point = coefficients_at(model, t, 0.0) if not ou else None
        if not ou:
            md = merton_proportion(point.mu, point.sigma)
            lam_all = np.full(P, md.lam)
            sigma_k = point.sigma
            mu_k = point.mu
            r_k = point.r
        else:
            sig_v = np.asarray(model.sigma_of(v), dtype=float)
            lam_all = np.abs(model.mu_scalar) / sig_v
            r_k = model.r

        zetas = np.empty((S, P, n))
        betas = np.full((S, P), np.nan)
        for s, rule in enumerate(rules):
            if isinstance(rule, CustomRule):
                for p in range(P):
                    zetas[s, p] = np.asarray(
                        rule.fn(t, float(v[p]) if ou else 0.0, math.exp(y[s, p])),
                        dtype=float,
                    )
            else:
                if isinstance(rule, MertonUnconstrained):
                    b = np.ones(P)
                elif isinstance(rule, FixedFraction):
                    b = np.full(P, rule.c)
                elif isinstance(rule, FractionSchedule):
                    b = np.full(P, rule.fn(t))
                elif isinstance(rule, ProjectedLimiting):
                    b = np.array([solve_beta(float(l), h_limit) for l in lam_all])
                else:  # ProjectedCurrent / RelativeProjected
                    b = np.array(
                        [
                            solve_beta(float(l), h_eval(pair, math.exp(yy)))
                            for l, yy in zip(lam_all, y[s])
                        ]
                    )
                betas[s] = b
                if ou:
                    zetas[s, :, 0] = b * model.mu_scalar / sig_v**2
                else:
                    zetas[s] = b[:, None] * md.zeta_m[None, :]
            if check_admissible and viol_step[s] < 0 and pair is not None:
                for p in range(P):
                    stats = (
                        portfolio_stats_of(
                            zetas[s, p], np.array([model.mu_scalar]),
                            sig_v[p] * np.array([[rho, rho_c]]),
                        )
                        if ou
                        else portfolio_stats_of(zetas[s, p], mu_k, sigma_k)
                    )
                    if f_eval(pair, stats) > h_eval(pair, math.exp(y[s, p])) + 1e-9:
                        viol_step[s] = k
                        break

        if rec_ptr < R and rec_idx[rec_ptr] == k:
            y_rec[:, rec_ptr, :] = y
            beta_rec[:, rec_ptr, :] = betas
            rec_ptr += 1

        dw = rng.standard_normal((m, P)) * sqdt
        for s in range(S):
            if ou:
                row = zetas[s, :, 0][:, None] * sig_v[:, None] * np.array([[rho, rho_c]])
                zmu = zetas[s, :, 0] * model.mu_scalar
            else:
                row = zetas[s] @ sigma_k
                zmu = zetas[s] @ mu_k
            q = r_k + zmu - 0.5 * np.sum(row * row, axis=1)
            y[s] += q * dt + np.sum(row * dw.T, axis=1)
            drift_sum[s] += q * dt
        if ou:
            v = model.vbar + (v - model.vbar) * decay + vscale * dw[1] / sqdt

        if use_stop:
            newly = (~stopped) & (y[0] >= stop_level_y)
            if np.any(newly):
                y_at_stop[:, newly] = y[:, newly]
                stop_step[newly] = k + 1
                stopped |= newly

    if rec_ptr < R and rec_idx[rec_ptr] == n_steps:
        y_rec[:, rec_ptr, :] = y
        beta_rec[:, rec_ptr, :] = betas  # left-endpoint betas of the last step

    y_at_stop[:, ~stopped] = y[:, ~stopped]
    if check_admissible and (viol_step >= 0).any():
        s = int(np.argmax(viol_step >= 0))
        raise AdmissibilityError(
            f"strategy '{tags[s]}' violates the constraint at step "
            f"{int(viol_step[s])} (t={viol_step[s] * dt:g})"
        )
    return BatchResult(
        times=rec_idx * dt,
        log_wealth=y_rec,
        beta_series=beta_rec,
        y_final=y.copy(),
        drift_sum=drift_sum,
        y_at_stop=y_at_stop,
        stop_step=stop_step,
        viol_step=viol_step,
        v_final=v.copy() if ou else None,
        tags=tags,
        cfg=cfg,
    )


def simulate_path(
    model: MarketModel,
    pair: Optional[ConstraintPair],
    rule: StrategyRule,
    cfg: SimConfig,
    path_index: int = 0,
) -> PathResult:
    """One recorded path of one strategy (a batch column; identical to the
    same column of ``simulate_batch`` for the same config)."""
    if not (0 <= path_index < cfg.paths):
        raise ValueError(f"path_index {path_index} outside [0, {cfg.paths})")
    batch = simulate_batch(model, pair, [rule], cfg)
    return batch.path(0, path_index)


def growth_rate(result: PathResult, burn_in_fraction: float = 0.0) -> float:
    """(Y(T) - Y(T * burn)) / (T - T * burn) from the recorded series."""
    if not (0.0 <= burn_in_fraction <= 0.9):
        raise ValueError("burn_in_fraction must lie in [0, 0.9]")
    t = result.times
    y = result.log_wealth
    t_burn = burn_in_fraction * t[-1]
    j = int(np.searchsorted(t, t_burn))
    if j >= len(t) - 1:
        j = len(t) - 2
    return float((y[-1] - y[j]) / (t[-1] - t[j]))


def batch_growth(batch: BatchResult, burn_in_fraction: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Per-strategy growth estimate and standard error across paths."""
    t = batch.times
    t_burn = burn_in_fraction * t[-1]
    j = int(np.searchsorted(t, t_burn))
    if j >= len(t) - 1:
        j = len(t) - 2
    per_path = (batch.log_wealth[:, -1, :] - batch.log_wealth[:, j, :]) / (
        t[-1] - t[j]
    )
    mean = per_path.mean(axis=1)
    P = per_path.shape[1]
    se = per_path.std(axis=1, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(len(mean))
    return mean, se


def check_transience(zeta: np.ndarray, point) -> bool:
    """True when the proportions sit in the transient region
    zeta' mu >= ||zeta' sigma||^2 / 2 (wealth drifts to +infinity)."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    zmu = float(zeta @ point.mu)
    zsig2 = float(np.sum((zeta @ point.sigma) ** 2))
    return zmu >= 0.5 * zsig2


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------


@dataclass
class CoalescenceReport:
    """Late-window sup of |beta(t, X_t) - beta_inf(t)| per path."""

    sup_late: np.ndarray
    window: Tuple[float, float]
    fraction_below_001: float
    quantile_99: float
    max_gap: float


def beta_coalescence_report(
    model: MarketModel, pair: ConstraintPair, cfg: SimConfig
) -> CoalescenceReport:
    batch = simulate_batch(
        model, pair, [ProjectedCurrent(), ProjectedLimiting()], cfg
    )
    t = batch.times
    late = t >= 0.5 * t[-1]
    gap = np.abs(batch.beta_series[0][late] - batch.beta_series[1][late])
    sup_late = gap.max(axis=0)
    return CoalescenceReport(
        sup_late=sup_late,
        window=(float(0.5 * t[-1]), float(t[-1])),
        fraction_below_001=float((sup_late < 0.01).mean()),
        quantile_99=float(np.quantile(sup_late, 0.99)),
        max_gap=float(sup_late.max()),
    )


@dataclass
class SupermartingaleReport:
    ratio_mean: float
    se: float
    passed: bool
    n_paths: int
    strategy_tag: str


def supermartingale_check(
    model: MarketModel,
    pair: ConstraintPair,
    test_rule: StrategyRule,
    cfg: SimConfig,
) -> SupermartingaleReport:
    """Monte Carlo estimate of E[X^test(T) / X^proj(T)] under common noise
    for a relative pair; the ratio is a supermartingale started at 1, so the
    check passes when the estimate stays below 1 + 3 SE."""
    if pair.scope != "relative":
        raise ValueError("supermartingale_check requires a relative pair")
    batch = simulate_batch(
        model,
        pair,
        [test_rule, RelativeProjected()],
        cfg,
        check_admissible=True,
    )
    ratio = np.exp(batch.y_final[0] - batch.y_final[1])
    mean = float(ratio.mean())
    se = float(ratio.std(ddof=1) / math.sqrt(len(ratio)))
    return SupermartingaleReport(
        ratio_mean=mean,
        se=se,
        passed=mean <= 1.0 + 3.0 * se,
        n_paths=len(ratio),
        strategy_tag=batch.tags[0],
    )


@dataclass
class LogDominanceReport:
    diff_mean: float
    se: float
    passed: bool
    n_paths: int
    strategy_tag: str
    stop_desc: str


def finite_horizon_log_check(
    model: MarketModel,
    pair: ConstraintPair,
    test_rule: StrategyRule,
    stop: StoppingSpec,
    cfg: SimConfig,
) -> LogDominanceReport:
    """Paired Monte Carlo estimate of
    E[log X^proj(tau) - log X^test(tau)] >= -3 SE at a bounded stopping time
    (fixed horizon or capped first-hitting of the test strategy's wealth)."""
    if pair.scope != "relative":
        raise ValueError("finite_horizon_log_check requires a relative pair")
    batch = simulate_batch(
        model,
        pair,
        [test_rule, RelativeProjected()],
        cfg,
        stop=stop,
        check_admissible=True,
    )
    if stop.kind == "fixed":
        diff = batch.y_final[1] - batch.y_final[0]
        desc = f"fixed horizon T={cfg.horizon:g}"
    else:
        diff = batch.y_at_stop[1] - batch.y_at_stop[0]
        desc = (
            f"first X >= {stop.level_multiple:g} x0 on '{batch.tags[0]}', "
            f"capped at T={cfg.horizon:g}"
        )
    mean = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(len(diff)))
    return LogDominanceReport(
        diff_mean=mean,
        se=se,
        passed=mean >= -3.0 * se,
        n_paths=len(diff),
        strategy_tag=batch.tags[0],
        stop_desc=desc,
    )


# ---------------------------------------------------------------------------
# analytic growth targets
# ---------------------------------------------------------------------------


def growth_targets(
    model: MarketModel, pair: Optional[ConstraintPair], nodes: int = 64
) -> Tuple[float, float]:
    """(corrected, as_printed) long-run growth targets.

    The drift of log wealth under the projected strategy delta(lam) * zeta_M
    is Q = r + (delta - delta^2/2) lam^2, so the growth rate is the ergodic
    average r + Z((delta - delta^2/2) x^2).  The second value returned is
    the weaker constant r + Z(x^2 delta(x)) quoted in parts of the
    literature, which drops the -delta^2 lam^2 / 2 term; it is reported for
    comparison and is reproduced by simulation only when delta == 0 or the
    gap Z(delta^2 x^2 / 2) vanishes.
    """
    from .market import z_quadrature  # local import to avoid cycle at load
    from .projection import delta as delta_of

    if isinstance(model, ConstantMarket):
        r = model.point.r
    elif isinstance(model, PeriodicMarket):
        r = model.point_fn(0.0).r
    else:
        r = model.r

    if pair is None:
        corrected = r + z_quadrature(model, lambda x: 0.5 * x * x, nodes).value
        printed = r + z_quadrature(model, lambda x: x * x, nodes).value
        return corrected, printed

    if pair.scope == "relative":
        scale = lambda x: beta_rel(pair, x)
    else:
        scale = lambda x: delta_of(pair, x)

    corrected = (
        r
        + z_quadrature(
            model,
            lambda x: (scale(x) - 0.5 * scale(x) ** 2) * x * x,
            nodes,
        ).value
    )
    printed = r + z_quadrature(model, lambda x: scale(x) * x * x, nodes).value
    return corrected, printed


def beta_rel(pair: ConstraintPair, lam: float) -> float:
    """Projection scale for a relative pair (constant compliance budget)."""
    from .projection import beta_of

    return beta_of(pair, lam, h_eval(pair, 1.0))
