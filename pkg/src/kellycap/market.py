"""Market-coefficient models and the long-run (ergodic) functional.

Three coefficient processes are built in:

* ``ConstantMarket``    -- fixed (mu, sigma)
* ``PeriodicMarket``    -- deterministic coefficients, periodic in time
* ``OUStochVolMarket``  -- single stock, two Brownian factors, volatility
  Sigma(V) driven by an Ornstein-Uhlenbeck state V with exact Gaussian
  transitions; Sigma is bounded above and away from zero (default: logistic
  ramp between ``sig_lo`` and ``sig_hi``)

For each model the long-run time average of phi(lam(t)), with
``lam = ||zeta_M' sigma||`` the sigma-norm of the Merton proportions,
converges to a constant Z(phi).  ``z_quadrature`` evaluates Z(phi)
analytically (Gauss-Hermite against the OU invariant law N(vbar, 1/(2 nu)),
a period average in the periodic case) and ``z_time_average`` estimates the
same quantity from a simulated path, with a batch-means error bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import lfilter

from .numerics import gauss_expectation
from .projection import merton_proportion
from .risk import derive_seed

__all__ = [
    "MarketPoint",
    "ConstantMarket",
    "PeriodicMarket",
    "OUStochVolMarket",
    "MarketModel",
    "ErgodicValue",
    "logistic_vol",
    "coefficients_at",
    "lambda_at",
    "ou_step",
    "ou_path",
    "z_quadrature",
    "z_time_average",
]


@dataclass(frozen=True)
class MarketPoint:
    """Instantaneous coefficients: riskless rate, excess returns mu and the
    n x m volatility matrix."""

    r: float
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise ValueError("market coefficients must be finite")
        if mu.shape[0] != sigma.shape[0]:
            raise ValueError("mu and sigma row counts disagree")
        if np.linalg.matrix_rank(sigma) < sigma.shape[0]:
            raise ValueError("sigma must have full row rank")


@dataclass(frozen=True)
class ConstantMarket:
    point: MarketPoint


@dataclass(frozen=True)
class PeriodicMarket:
    """Deterministic coefficients, a function of the phase t mod period."""

    period: float
    point_fn: Callable[[float], MarketPoint]

    def __post_init__(self) -> None:
        if not (self.period > 0.0):
            raise ValueError("period must be positive")


def logistic_vol(sig_lo: float, sig_hi: float, v: float) -> float:
    """Continuous volatility map bounded in (sig_lo, sig_hi)."""
    return sig_lo + (sig_hi - sig_lo) / (1.0 + math.exp(-v))


@dataclass(frozen=True)
class OUStochVolMarket:
    """n=1, m=2 stochastic-volatility market.

    Coefficients at state v: mu = mu_scalar, sigma row
    (rho * Sigma(v), sqrt(1-rho^2) * Sigma(v)); the state follows
    dV = nu (vbar - V) dt + dW_2.  ``vol_map``, when given, must accept and
    return numpy arrays; by default the logistic ramp between ``sig_lo``
    and ``sig_hi`` is used (and the compiled simulation kernel is only
    available for that default).
    """

    nu: float
    vbar: float
    rho: float
    mu_scalar: float
    r: float
    v0: float = math.nan
    sig_lo: float = 0.1
    sig_hi: float = 0.6
    vol_map: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if not (self.nu > 0.0):
            raise ValueError("mean-reversion rate nu must be positive")
        if not (-1.0 <= self.rho <= 1.0):
            raise ValueError("rho must lie in [-1, 1]")
        if self.vol_map is None and not (0.0 < self.sig_lo < self.sig_hi):
            raise ValueError("need 0 < sig_lo < sig_hi")
        if math.isnan(self.v0):
            object.__setattr__(self, "v0", self.vbar)

    def sigma_of(self, v):
        if self.vol_map is not None:
            return self.vol_map(v)
        if isinstance(v, np.ndarray):
            return self.sig_lo + (self.sig_hi - self.sig_lo) / (1.0 + np.exp(-v))
        return logistic_vol(self.sig_lo, self.sig_hi, v)

    def lam_of(self, v):
        """||zeta_M' sigma|| = |mu| / Sigma(v) at state v."""
        return abs(self.mu_scalar) / self.sigma_of(v)


MarketModel = Union[ConstantMarket, PeriodicMarket, OUStochVolMarket]


def coefficients_at(model: MarketModel, t: float, state: float = 0.0) -> MarketPoint:
    """Instantaneous (r, mu, sigma).  Constant models ignore (t, state);
    periodic models depend on t mod period; the OU model depends on the
    volatility state only."""
    if t < 0.0:
        raise ValueError("t must be non-negative")
    if isinstance(model, ConstantMarket):
        return model.point
    if isinstance(model, PeriodicMarket):
        return model.point_fn(math.fmod(t, model.period))
    sig = float(model.sigma_of(state))
    row = np.array([model.rho * sig, math.sqrt(1.0 - model.rho**2) * sig])
    return MarketPoint(r=model.r, mu=np.array([model.mu_scalar]), sigma=row[None, :])


def lambda_at(model: MarketModel, t: float, state: float = 0.0) -> float:
    """sigma-norm of the Merton proportions at (t, state)."""
    if isinstance(model, OUStochVolMarket):
        return float(model.lam_of(state))
    point = coefficients_at(model, t, state)
    return merton_proportion(point.mu, point.sigma).lam


def ou_step(model: OUStochVolMarket, v, dt: float, noise):
    """Exact OU transition over dt:
    v' = vbar + (v - vbar) e^{-nu dt} + sqrt((1 - e^{-2 nu dt})/(2 nu)) * noise.

    Accepts scalars or arrays for (v, noise).
    """
    if not (dt > 0.0):
        raise ValueError("dt must be positive")
    decay = math.exp(-model.nu * dt)
    scale = math.sqrt(-math.expm1(-2.0 * model.nu * dt) / (2.0 * model.nu))
    return model.vbar + (v - model.vbar) * decay + scale * noise


def ou_path(
    model: OUStochVolMarket, n_steps: int, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """States V(dt), ..., V(n dt) via the exact linear recursion (evaluated
    with a length-n IIR filter, identical to stepping ou_step n times)."""
    decay = math.exp(-model.nu * dt)
    scale = math.sqrt(-math.expm1(-2.0 * model.nu * dt) / (2.0 * model.nu))
    shocks = model.vbar * (1.0 - decay) + scale * rng.standard_normal(n_steps)
    shocks[0] += model.v0 * decay
    return lfilter([1.0], [1.0, -decay], shocks)


@dataclass(frozen=True)
class ErgodicValue:
    value: float
    method: str  # "quadrature" | "time_average"
    error_estimate: float

    def __post_init__(self) -> None:
        if self.error_estimate < 0.0:
            raise ValueError("error_estimate must be non-negative")


def z_quadrature(
    model: MarketModel, phi: Callable[[float], float], nodes: int
) -> ErgodicValue:
    """Z(phi) as an invariant-measure integral.

    Constant: phi(lam) exactly.  Periodic: trapezoid average of phi(lam(t))
    over one period on ``nodes`` points.  OU: Gauss-Hermite integral of
    phi(|mu|/Sigma(v)) against N(vbar, 1/(2 nu)).  The error estimate is the
    change from a half-resolution rule.
    """
    if nodes < 2:
        raise ValueError("nodes must be >= 2")
    if isinstance(model, ConstantMarket):
        md = merton_proportion(model.point.mu, model.point.sigma)
        return ErgodicValue(float(phi(md.lam)), "quadrature", 0.0)
    if isinstance(model, PeriodicMarket):
        full = _period_average(model, phi, nodes)
        half = _period_average(model, phi, max(2, nodes // 2))
        return ErgodicValue(full, "quadrature", abs(full - half))
    integrand = lambda v: float(phi(float(model.lam_of(v))))
    full = gauss_expectation(integrand, model.vbar, model.nu, nodes)
    half = gauss_expectation(integrand, model.vbar, model.nu, max(2, nodes // 2))
    return ErgodicValue(full, "quadrature", abs(full - half))


def _period_average(
    model: PeriodicMarket, phi: Callable[[float], float], nodes: int
) -> float:
    ts = np.linspace(0.0, model.period, nodes + 1)
    vals = [phi(lambda_at(model, t)) for t in ts]
    vals[-1] = vals[0]  # periodic endpoint
    return float(np.trapezoid(vals, ts) / model.period)


def z_time_average(
    model: MarketModel,
    phi: Callable[[float], float],
    horizon: float,
    dt: float,
    seed: int = 0,
    batches: int = 32,
) -> ErgodicValue:
    """Z(phi) as a long-run time average (1/T) sum phi(lam(t_k)) dt along a
    simulated coefficient path; error bar from batch means."""
    if not (horizon > 0.0 and 0.0 < dt <= horizon):
        raise ValueError("need horizon > 0 and 0 < dt <= horizon")
    if isinstance(model, ConstantMarket):
        md = merton_proportion(model.point.mu, model.point.sigma)
        return ErgodicValue(float(phi(md.lam)), "time_average", 0.0)
    n = int(round(horizon / dt))
    if isinstance(model, PeriodicMarket):
        lams = _periodic_lambda_grid(model, n, dt)
        vals = np.array([phi(l) for l in lams]) if not _vectorized(phi) else phi(lams)
        mean = float(np.mean(vals))
        half = float(np.mean(vals[: n // 2]))
        return ErgodicValue(mean, "time_average", abs(mean - half))
    rng = np.random.default_rng(derive_seed(seed, "z-time-average", horizon, dt))
    v = ou_path(model, n, dt, rng)
    lam = np.abs(model.mu_scalar) / np.asarray(model.sigma_of(v))
    vals = phi(lam) if _vectorized(phi) else np.array([phi(l) for l in lam])
    mean = float(np.mean(vals))
    k = max(2, min(batches, n // 2))
    bm = np.array([m.mean() for m in np.array_split(vals, k)])
    se = float(bm.std(ddof=1) / math.sqrt(k))
    return ErgodicValue(mean, "time_average", se)


def _vectorized(phi: Callable) -> bool:
    try:
        out = phi(np.array([0.1, 0.2]))
    except Exception:
        return False
    return isinstance(out, np.ndarray) and out.shape == (2,)


def _periodic_lambda_grid(model: PeriodicMarket, n_steps: int, dt: float) -> np.ndarray:
    """lam at the step left endpoints; one period is reused when dt divides
    the period evenly."""
    steps_per_period = model.period / dt
    if abs(steps_per_period - round(steps_per_period)) < 1e-9:
        k = int(round(steps_per_period))
        base = np.array([lambda_at(model, i * dt) for i in range(k)])
        reps = int(math.ceil(n_steps / k))
        return np.tile(base, reps)[:n_steps]
    return np.array([lambda_at(model, i * dt) for i in range(n_steps)])
