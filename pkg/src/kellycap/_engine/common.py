"""Shared plain-data interface between the engine implementations.

The engine advances ``S`` strategies over ``n_steps`` Euler steps of the
log-wealth SDE for a chunk of paths under common noise.  All built-in
strategies are scalar multiples of the Merton proportions, so a step only
needs the sigma-norm ``lam`` of the Merton vector and a scalar Brownian
shock; betas are re-solved each step from the current (lam, wealth) where
the strategy demands it.

Strategy codes:
    0  fixed fraction         beta = frac
    1  projected, current set beta solves g(beta) = h(X_t)   (or h const)
    2  projected, limit set   beta solves g(beta) = 0
    3  fraction schedule      beta = frac_path[step]

Market codes: 0 constant lam, 1 deterministic lam path, 2 OU stochastic
volatility with the built-in logistic map (custom maps run on the numpy
engine via ``vol_map``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..numerics import norm_quantile

MARKET_CONSTANT = 0
MARKET_LAMBDA_PATH = 1
MARKET_OU = 2

KIND_VAR = 0
KIND_TVAR = 1
KIND_LEL = 2

H_CONSTANT = 0
H_ABSOLUTE = 1

STRAT_FIXED = 0
STRAT_CURRENT = 1
STRAT_LIMIT = 2
STRAT_SCHEDULE = 3

NOISE_BLOCK = 512  # steps of normals drawn per RNG call
ADMIS_TOL = 1e-9


@dataclass
class EngineSpec:
    """Plain-data description of one simulation batch."""

    market_code: int
    lam_const: float
    lam_path: Optional[np.ndarray]  # float64[n_steps] for MARKET_LAMBDA_PATH
    # OU parameters (ignored otherwise)
    ou_nu: float
    ou_vbar: float
    ou_v0: float
    ou_rho: float
    ou_mu_abs: float
    ou_sig_lo: float
    ou_sig_hi: float
    vol_map: Optional[Callable]  # custom Sigma(v); numpy engine only
    r: float
    # constraint
    kind_code: int
    h_mode: int
    h_const: float  # may be +inf (never binding)
    a_abs: float
    alpha: float
    tau: float
    # strategies
    strat_codes: np.ndarray  # int64[S]
    strat_frac: np.ndarray  # float64[S]
    frac_paths: Optional[np.ndarray]  # float64[S, n_steps] rows for code 3
    # discretization
    n_steps: int
    dt: float
    y0: float
    rec_idx: np.ndarray  # int64[R], sorted, includes 0 and n_steps
    # optional stopping rule (first step with Y >= stop_level_y, capped)
    stop_level_y: float  # nan disables
    stop_strat: int
    check_admissible: bool

    # derived constants
    nq: float = field(init=False)
    sqrt_tau: float = field(init=False)
    r_tau: float = field(init=False)
    log_alpha: float = field(init=False)

    def __post_init__(self) -> None:
        self.nq = norm_quantile(self.alpha)
        self.sqrt_tau = math.sqrt(self.tau)
        self.r_tau = self.r * self.tau
        self.log_alpha = math.log(self.alpha)

    @property
    def n_factors(self) -> int:
        return 2 if self.market_code == MARKET_OU else 1

    @property
    def compiled_ok(self) -> bool:
        """True when no Python callables are needed per step."""
        return self.vol_map is None


@dataclass
class ChunkResult:
    y_rec: np.ndarray  # [S, R, P]
    beta_rec: np.ndarray  # [S, R, P]
    y_final: np.ndarray  # [S, P]
    drift_sum: np.ndarray  # [S, P]
    y_at_stop: np.ndarray  # [S, P]
    stop_step: np.ndarray  # int64[P], -1 if never stopped
    viol_step: np.ndarray  # int64[S], first inadmissible step or -1
    v_final: Optional[np.ndarray]  # [P] for OU markets
