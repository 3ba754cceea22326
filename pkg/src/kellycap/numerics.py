"""Scalar special functions, safeguarded root-finding and Gaussian quadrature.

Everything in this module is a pure function of its inputs and safe to call
from any number of workers.  Accuracy contracts:

* ``norm_cdf``      -- absolute error <= 1e-14 against the exact normal CDF
* ``norm_quantile`` -- ``norm_cdf(norm_quantile(p)) == p`` to within 1e-12
* ``gauss_expectation`` -- exact (to roundoff) for polynomials of degree
  ``2 * nodes - 1`` under the Gaussian weight
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

__all__ = [
    "BracketError",
    "ConvergenceError",
    "RootBracket",
    "norm_cdf",
    "norm_pdf",
    "log_norm_cdf",
    "norm_quantile",
    "solve_increasing_root",
    "gauss_expectation",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class BracketError(ValueError):
    """The supplied bracket does not straddle a root."""


class ConvergenceError(RuntimeError):
    """The iteration budget was exhausted before reaching tolerance."""


@dataclass(frozen=True)
class RootBracket:
    """Search interval and stopping rules for the scalar root-finder."""

    lo: float
    hi: float
    tol_abs: float = 1e-12
    tol_rel: float = 1e-12
    max_iter: int = 200

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")
        if not (self.tol_abs > 0.0 and self.tol_rel > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def norm_cdf(z: float) -> float:
    """Standard normal CDF N(z), accurate to ~1 ulp via the complementary
    error function."""
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"norm_cdf requires finite input, got {z}")
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_pdf(z: float) -> float:
    """Standard normal density."""
    return math.exp(-0.5 * z * z) / _SQRT_2PI


def log_norm_cdf(z: float) -> float:
    """log N(z), stable far into the left tail.

    ``erfc`` underflows near z = -37.5; below that an asymptotic expansion of
    the Mills ratio takes over.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"log_norm_cdf requires finite input, got {z}")
    if z > -37.0:
        return math.log(0.5 * math.erfc(-z / _SQRT2))
    # N(z) ~ phi(z)/|z| * (1 - 1/z^2 + 3/z^4) for z -> -inf
    zi2 = 1.0 / (z * z)
    return (
        -0.5 * z * z
        - math.log(-z * _SQRT_2PI)
        + math.log1p(-zi2 * (1.0 - 3.0 * zi2))
    )


def norm_quantile(p: float) -> float:
    """Inverse of ``norm_cdf`` on (0, 1).

    A rational first guess (Abramowitz & Stegun 26.2.22, error < 3e-3) is
    polished by Newton steps carried out on log N so the iteration stays
    well-conditioned in the tails.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"norm_quantile requires p in (0,1), got {p}")
    if p == 0.5:
        return 0.0
    # work in the lower tail and mirror at the end
    q = min(p, 1.0 - p)
    t = math.sqrt(-2.0 * math.log(q))
    x = -(t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t)))
    log_q = math.log(q)
    for _ in range(9):
        log_cdf = log_norm_cdf(x)
        # Newton on log N(x) - log q; N/phi evaluated in log space
        step = (log_cdf - log_q) * math.exp(
            log_cdf + 0.5 * x * x + math.log(_SQRT_2PI)
        )
        x -= step
        if abs(step) < 1e-16 * max(1.0, abs(x)):
            break
    return x if p < 0.5 else -x


def solve_increasing_root(
    fn: Callable[[float], float],
    bracket: RootBracket,
    dfn: Optional[Callable[[float], float]] = None,
) -> float:
    """Locate the root of a continuous function with a single sign change on
    ``[bracket.lo, bracket.hi]`` (increasing through its root).

    Requires ``fn(lo) <= 0 <= fn(hi)``.  Midpoint bisection guarantees
    convergence; when ``dfn`` is supplied, Newton steps are attempted and
    kept only if they stay inside the current bracket.  Deterministic for
    identical inputs.

    Returns ``x`` with ``|fn(x)| <= tol_abs`` or with the bracket narrowed to
    ``tol_rel * |x|``.
    """
    lo, hi = float(bracket.lo), float(bracket.hi)
    flo = fn(lo)
    fhi = fn(hi)
    if flo > 0.0 or fhi < 0.0:
        raise BracketError(
            f"sign condition violated: fn({lo})={flo}, fn({hi})={fhi}"
        )
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi

    x = 0.5 * (lo + hi)
    for _ in range(bracket.max_iter):
        fx = fn(x)
        if abs(fx) <= bracket.tol_abs:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        if (hi - lo) <= bracket.tol_rel * abs(x):
            return x
        x_next = None
        if dfn is not None:
            d = dfn(x)
            if d > 0.0 and math.isfinite(d):
                trial = x - fx / d
                if lo < trial < hi:
                    x_next = trial
        x = 0.5 * (lo + hi) if x_next is None else x_next
    raise ConvergenceError(
        f"no convergence in {bracket.max_iter} iterations; "
        f"bracket [{lo}, {hi}]"
    )


@lru_cache(maxsize=32)
def _hermgauss(nodes: int) -> tuple:
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return x, w / math.sqrt(math.pi)


def gauss_expectation(
    phi: Callable[[float], float],
    mean: float,
    concentration: float,
    nodes: int,
) -> float:
    """Expectation of ``phi`` under the Gaussian density
    sqrt(nu/pi) * exp(-nu (x - mean)^2), i.e. N(mean, 1/(2 nu)), by
    Gauss-Hermite quadrature.

    ``concentration`` is the exponent coefficient nu > 0.  Exact for
    polynomials of degree <= 2*nodes - 1 after the affine change of
    variables.
    """
    nu = float(concentration)
    if not (nu > 0.0):
        raise ValueError(f"concentration must be positive, got {nu}")
    if nodes < 2:
        raise ValueError(f"nodes must be >= 2, got {nodes}")
    x, w = _hermgauss(int(nodes))
    scale = 1.0 / math.sqrt(nu)
    total = 0.0
    for xi, wi in zip(x, w):
        total += wi * float(phi(mean + scale * xi))
    return total
