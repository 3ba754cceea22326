import math

import numpy as np
import pytest

from kellycap.constraints import (
    ConstraintPair,
    ConstraintSetQuery,
    f_eval,
    g_eval,
    h_eval,
    is_admissible,
    portfolio_stats_of,
    radius_bound,
)
from kellycap.numerics import norm_quantile
from kellycap.projection import (
    LipschitzReport,
    SingularMarketError,
    beta_of,
    d_sigma,
    delta,
    delta_star,
    lipschitz_report,
    merton_proportion,
    oracle_project,
    project_merton,
)
from kellycap.risk import PortfolioStats, RiskKind, RiskParams


# ---------------------------------------------------------------------------
# merton_proportion and the sigma metric
# ---------------------------------------------------------------------------


def test_merton_single_asset():
    md = merton_proportion([0.05], [[0.2]])
    assert md.zeta_m[0] == pytest.approx(1.25, rel=1e-14)
    assert md.lam == pytest.approx(0.25, rel=1e-14)


def test_merton_diagonal_decouples():
    md = merton_proportion([0.05, 0.02], [[0.2, 0.0], [0.0, 0.4]])
    assert md.zeta_m == pytest.approx([0.05 / 0.04, 0.02 / 0.16], rel=1e-13)


def test_merton_residual_small(rng):
    for _ in range(20):
        sigma = rng.normal(0.0, 0.3, size=(3, 4))
        if np.linalg.matrix_rank(sigma) < 3:
            continue
        mu = rng.normal(0.0, 0.1, size=3)
        md = merton_proportion(mu, sigma)
        gram = sigma @ sigma.T
        assert np.linalg.norm(gram @ md.zeta_m - mu) <= 1e-10 * max(
            np.linalg.norm(mu), 1e-300
        )
        # lam^2 = zeta_M' mu always
        assert md.lam**2 == pytest.approx(float(md.zeta_m @ mu), rel=1e-10, abs=1e-14)


def test_merton_singular_market_rejected():
    with pytest.raises(SingularMarketError):
        merton_proportion([0.05, 0.05], [[0.2, 0.1], [0.2, 0.1]])


def test_d_sigma_metric_properties(rng):
    sigma = np.array([[0.2, 0.05, 0.0], [0.01, 0.25, 0.1]])
    z = rng.normal(size=2)
    assert d_sigma(z, z, sigma) == 0.0
    for _ in range(100):
        a, b, c = rng.normal(size=(3, 2))
        assert d_sigma(a, c, sigma) <= d_sigma(a, b, sigma) + d_sigma(b, c, sigma) + 1e-12
    assert d_sigma([1.5], [0.5], [[0.2]]) == pytest.approx(0.2, rel=1e-14)


def test_d_sigma_dimension_mismatch():
    with pytest.raises(ValueError):
        d_sigma([1.0, 2.0], [0.5], [[0.2]])


# ---------------------------------------------------------------------------
# beta_of / delta / delta_star
# ---------------------------------------------------------------------------


def test_beta_infinite_budget(params, relative_pairs):
    for pair in relative_pairs:
        assert beta_of(pair, 2.0, math.inf) == 1.0


def test_beta_zero_lambda(params, relative_pairs):
    for pair in relative_pairs:
        assert beta_of(pair, 0.0, 0.05) == 1.0


def test_beta_lel_closed_form(params):
    pair = ConstraintPair.relative(RiskKind.LEL, 0.01, params)
    h = -math.log1p(-0.01)
    for lam in np.linspace(0.05, 3.0, 40):
        u = norm_quantile(params.alpha) - norm_quantile(
            params.alpha * (1.0 - 0.01) * math.exp(-params.r * params.tau)
        )
        expected = min(1.0, u / (lam * math.sqrt(params.tau)))
        assert beta_of(pair, float(lam), h) == pytest.approx(expected, abs=1e-10)


def test_delta_is_one_outside_binding_band(params):
    # VaR: g(1) < 0 both for tiny lam and, by the concave-quadratic shape
    # of g(1) as a function of lam, for very large lam
    pair = ConstraintPair.relative(RiskKind.VAR, 0.01, params)
    assert g_eval(pair, 0.003, 1.0) < 0.0
    assert delta(pair, 0.003) == 1.0
    assert g_eval(pair, 20.0, 1.0) < 0.0
    assert delta(pair, 20.0) == 1.0


def test_delta_var_quadratic_oracle(params):
    pair = ConstraintPair.relative(RiskKind.VAR, 0.01, params)
    nq = norm_quantile(params.alpha)
    sq = math.sqrt(params.tau)
    for lam in np.linspace(0.05, 5.0, 60):
        A = 0.5 * params.tau * lam * lam
        B = params.tau * lam * lam + nq * sq * lam
        C = params.r * params.tau
        s = math.sqrt(B * B + 4 * A * C)
        quad = (B + s) / (2 * A) if B >= 0 else 2 * C / (s - B)
        assert delta(pair, float(lam)) == pytest.approx(min(1.0, quad), abs=1e-10)


def test_delta_nonincreasing_past_binding(params, relative_pairs):
    # the VaR scaling factor turns back up at lam = |N^{-1}(alpha)|/(2 sqrt(tau))
    # on its way to the non-binding region, so monotonicity is asserted up to
    # the turning point (TVaR/LEL keep decreasing on the whole grid)
    turn = abs(norm_quantile(params.alpha)) / (2.0 * math.sqrt(params.tau))
    for pair in relative_pairs:
        hi = min(5.0, turn) if pair.kind is RiskKind.VAR else 5.0
        lams = np.linspace(0.05, hi, 80)
        vals = [delta(pair, float(l)) for l in lams]
        binding = [v for v in vals if v < 1.0]
        assert all(b <= a + 1e-12 for a, b in zip(binding, binding[1:]))


def test_delta_var_turns_up_toward_nonbinding_region(params):
    # continuity forces delta back to 1 as lam approaches the upper root of
    # g(1) = 0; verify the dip-then-rise shape around the analytic turning
    # point
    pair = ConstraintPair.relative(RiskKind.VAR, 0.01, params)
    turn = abs(norm_quantile(params.alpha)) / (2.0 * math.sqrt(params.tau))
    assert delta(pair, turn) < delta(pair, 0.8 * turn)
    assert delta(pair, 1.5 * turn) > delta(pair, turn)


def test_delta_star_threshold_and_limit(params):
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    lam = 0.25
    assert delta_star(pair, lam, 5.0) == 1.0
    assert delta_star(pair, lam, 10.0) == 1.0
    lim = delta(pair, lam)
    assert abs(delta_star(pair, lam, 1e13) - lim) <= 1e-9
    xs = np.geomspace(10.5, 1e9, 60)
    vals = [delta_star(pair, lam, float(x)) for x in xs]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# projection and its oracle
# ---------------------------------------------------------------------------


def test_projection_identity_when_admissible(params):
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    q = ConstraintSetQuery(mu=[0.05], sigma=[[0.2]], wealth=5.0)  # below x0
    res = project_merton(pair, q)
    assert res.beta == 1.0 and not res.binding
    md = merton_proportion(q.mu, q.sigma)
    assert res.zeta_proj == pytest.approx(md.zeta_m)


def test_projection_boundary_residual(params, relative_pairs):
    q = ConstraintSetQuery(mu=[0.05], sigma=[[0.2]], wealth=1.0)
    for pair in relative_pairs:
        res = project_merton(pair, q)
        assert res.binding and 0.0 < res.beta < 1.0
        stats = portfolio_stats_of(res.zeta_proj, q.mu, q.sigma)
        assert abs(f_eval(pair, stats) - h_eval(pair, 1.0)) <= 1e-9


def test_oracle_returns_merton_when_admissible(params):
    pair = ConstraintPair.relative(RiskKind.VAR, 0.4, params)  # loose limit
    q = ConstraintSetQuery(mu=[0.002], sigma=[[0.5]], wealth=1.0)
    md = merton_proportion(q.mu, q.sigma)
    assert oracle_project(pair, q) == pytest.approx(md.zeta_m)


def test_oracle_matches_projection_1d(params):
    pair = ConstraintPair.relative(RiskKind.VAR, 0.01, params)
    q = ConstraintSetQuery(mu=[0.05], sigma=[[0.2]], wealth=1.0)
    res = project_merton(pair, q)
    oz = oracle_project(pair, q, seed=3)
    assert oz == pytest.approx(res.zeta_proj, abs=1e-6)


def test_oracle_collinear_2d_3d(params, rng):
    from kellycap.acceptance import _sin_angle

    for n, m in ((2, 3), (3, 4)):
        sigma = rng.normal(0.0, 0.3, size=(n, m))
        mu = rng.normal(0.05, 0.08, size=n)
        pair = ConstraintPair.relative(RiskKind.TVAR, 0.02, params)
        q = ConstraintSetQuery(mu=mu, sigma=sigma, wealth=1.0)
        res = project_merton(pair, q)
        if not res.binding:
            continue
        md = merton_proportion(mu, sigma)
        oz = oracle_project(pair, q, seed=5)
        assert _sin_angle(oz, md.zeta_m) <= 1e-5
        assert d_sigma(oz, md.zeta_m, sigma) - d_sigma(
            res.zeta_proj, md.zeta_m, sigma
        ) <= 1e-6


def test_oracle_requires_finite_budget(params):
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    q = ConstraintSetQuery(mu=[0.05], sigma=[[0.2]], wealth=5.0)
    with pytest.raises(ValueError):
        oracle_project(pair, q)


# ---------------------------------------------------------------------------
# structural identities used by the optimality proofs
# ---------------------------------------------------------------------------


def test_inverse_triangle_inequality(params, rng):
    pair = ConstraintPair.relative(RiskKind.VAR, 0.01, params)
    mu = np.array([0.05, 0.03])
    sigma = np.array([[0.2, 0.05, 0.0], [0.01, 0.25, 0.1]])
    q = ConstraintSetQuery(mu=mu, sigma=sigma, wealth=1.0)
    md = merton_proportion(mu, sigma)
    zr = project_merton(pair, q).zeta_proj
    found = 0
    while found < 1000:
        zeta = rng.normal(0.0, 0.2, size=2)
        if not is_admissible(pair, q, zeta):
            continue
        lhs = d_sigma(md.zeta_m, zeta, sigma) ** 2
        rhs = (
            d_sigma(md.zeta_m, zr, sigma) ** 2
            + d_sigma(zr, zeta, sigma) ** 2
        )
        assert lhs >= rhs - 1e-8
        found += 1


def test_drift_identity(params, rng):
    # Q(zeta) = (r + lam^2/2) - d_sigma(zeta, zeta_M)^2 / 2
    mu = np.array([0.05, 0.03])
    sigma = np.array([[0.2, 0.05, 0.0], [0.01, 0.25, 0.1]])
    md = merton_proportion(mu, sigma)
    r = 0.03
    for _ in range(100):
        zeta = rng.normal(0.0, 2.0, size=2)
        stats = portfolio_stats_of(zeta, mu, sigma)
        q_direct = r + stats.zeta_mu - 0.5 * stats.zeta_sigma**2
        q_metric = (r + 0.5 * md.lam**2) - 0.5 * d_sigma(zeta, md.zeta_m, sigma) ** 2
        assert q_direct == pytest.approx(q_metric, rel=1e-12, abs=1e-12)


def test_cauchy_schwarz_bound(params, rng):
    mu = np.array([0.05, 0.03])
    sigma = np.array([[0.2, 0.05, 0.0], [0.01, 0.25, 0.1]])
    md = merton_proportion(mu, sigma)
    for _ in range(200):
        zeta = rng.normal(0.0, 3.0, size=2)
        stats = portfolio_stats_of(zeta, mu, sigma)
        assert stats.zeta_mu <= stats.zeta_sigma * md.lam + 1e-12


# ---------------------------------------------------------------------------
# Lipschitz structure of beta in log wealth
# ---------------------------------------------------------------------------


def test_lipschitz_scan(params, rng):
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    pairs = [
        tuple(sorted(rng.uniform(15.0, 200.0, size=2)))
        for _ in range(10_000)
    ]
    report = lipschitz_report(pair, [0.15, 0.25, 0.5], pairs)
    assert isinstance(report, LipschitzReport)
    assert math.isfinite(report.max_ratio)
    assert not report.blowup
    assert report.max_ratio <= report.theoretical_bound * (1 + 1e-9)


def test_lipschitz_ratio_shrinks_at_higher_wealth(params, rng):
    # both bands sit above the binding threshold (~131 for lam = 0.25 with
    # a = 10); the budget h flattens with wealth, so the ratios shrink
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    near = [tuple(sorted(rng.uniform(140.0, 250.0, size=2))) for _ in range(3000)]
    far = [tuple(sorted(rng.uniform(1000.0, 3000.0, size=2))) for _ in range(3000)]
    rep_near = lipschitz_report(pair, [0.25], near)
    rep_far = lipschitz_report(pair, [0.25], far)
    assert rep_near.max_ratio > 0.0
    assert rep_far.max_ratio < rep_near.max_ratio
    assert rep_far.theoretical_bound < rep_near.theoretical_bound


def test_lipschitz_requires_absolute_pair(params, relative_pairs):
    with pytest.raises(ValueError):
        lipschitz_report(relative_pairs[0], [0.25], [(20.0, 30.0)])
    pair = ConstraintPair.absolute(RiskKind.VAR, 10.0, params)
    with pytest.raises(ValueError):
        lipschitz_report(pair, [0.25], [(5.0, 30.0)])
