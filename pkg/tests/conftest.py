import numpy as np
import pytest

from kellycap.constraints import ConstraintPair
from kellycap.market import ConstantMarket, MarketPoint
from kellycap.risk import RiskKind, RiskParams


@pytest.fixture(scope="session")
def params():
    """The running example: 5% percentile, 10 trading days, 3% rate."""
    return RiskParams(alpha=0.05, tau=10.0 / 252.0, r=0.03)


@pytest.fixture(scope="session")
def all_kinds():
    return [RiskKind.VAR, RiskKind.TVAR, RiskKind.LEL]


@pytest.fixture(scope="session")
def relative_pairs(params, all_kinds):
    return [ConstraintPair.relative(kind, 0.01, params) for kind in all_kinds]


@pytest.fixture(scope="session")
def absolute_pairs(params, all_kinds):
    return [ConstraintPair.absolute(kind, 10.0, params) for kind in all_kinds]


@pytest.fixture(scope="session")
def base_market():
    """lam = ||zeta_M' sigma|| = mu / sigma = 0.25."""
    return ConstantMarket(MarketPoint(r=0.03, mu=[0.05], sigma=[[0.2]]))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
