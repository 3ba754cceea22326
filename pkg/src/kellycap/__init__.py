"""kellycap: growth-optimal (Kelly) portfolio selection under dynamic
VaR / TVaR / LEL risk caps.

Closed-form risk measures of the projected loss law, constraint-set
projection of the Merton proportions by 1-D convex root-finding,
constrained-wealth SDE simulation under ergodic market models, and
numerical verification of the optimality and growth-rate structure.
"""

from ._engine import IMPLEMENTATION as engine_implementation
from .constraints import (
    AxiomReport,
    ConstraintPair,
    ConstraintSetQuery,
    GridSpec,
    f_eval,
    g_eval,
    h_eval,
    is_admissible,
    radius_bound,
    verify_axioms,
)
from .market import (
    ConstantMarket,
    ErgodicValue,
    MarketPoint,
    OUStochVolMarket,
    PeriodicMarket,
    coefficients_at,
    ou_step,
    z_quadrature,
    z_time_average,
)
from .numerics import (
    RootBracket,
    gauss_expectation,
    norm_cdf,
    norm_quantile,
    solve_increasing_root,
)
from .projection import (
    MertonData,
    ProjectionResult,
    beta_of,
    d_sigma,
    delta,
    delta_star,
    lipschitz_report,
    merton_proportion,
    oracle_project,
    project_merton,
)
from .risk import (
    PortfolioStats,
    RiskKind,
    RiskParams,
    limited_expected_loss,
    qtilde,
    relative_measure,
    sample_projected_loss,
    tail_value_at_risk,
    value_at_risk,
)
from .simulate import (
    BatchResult,
    CustomRule,
    FixedFraction,
    FractionSchedule,
    MertonUnconstrained,
    PathResult,
    ProjectedCurrent,
    ProjectedLimiting,
    RelativeProjected,
    SimConfig,
    StoppingSpec,
    beta_coalescence_report,
    check_transience,
    finite_horizon_log_check,
    growth_rate,
    growth_targets,
    simulate_batch,
    simulate_path,
    supermartingale_check,
)

__version__ = "0.1.0"
