import math

import numpy as np
import pytest
from scipy.stats import kstest

from kellycap.market import (
    ConstantMarket,
    ErgodicValue,
    MarketPoint,
    OUStochVolMarket,
    PeriodicMarket,
    coefficients_at,
    lambda_at,
    ou_path,
    ou_step,
    z_quadrature,
    z_time_average,
)

OU = OUStochVolMarket(nu=2.0, vbar=0.0, rho=-0.5, mu_scalar=0.05, r=0.03)


def sin_market(period=1.0, amp=0.5, sigma0=0.2, mu=0.05, r=0.03):
    def point_fn(t):
        s = sigma0 * (1.0 + amp * math.sin(2.0 * math.pi * t / period))
        return MarketPoint(r=r, mu=[mu], sigma=[[s]])

    return PeriodicMarket(period=period, point_fn=point_fn)


def test_constant_ignores_time_and_state(base_market):
    p0 = coefficients_at(base_market, 0.0)
    p1 = coefficients_at(base_market, 123.4, state=7.0)
    assert p0 is p1 is base_market.point


def test_periodic_depends_on_phase_only():
    model = sin_market(period=2.0)
    a = coefficients_at(model, 0.3)
    b = coefficients_at(model, 4.3)
    assert a.sigma == pytest.approx(b.sigma, rel=1e-12)


def test_ou_zero_correlation_row():
    flat = OUStochVolMarket(
        nu=1.0, vbar=0.0, rho=0.0, mu_scalar=0.05, r=0.03,
        vol_map=lambda v: np.full_like(np.asarray(v, dtype=float), 0.2),
    )
    point = coefficients_at(flat, 1.0, state=0.4)
    assert point.sigma[0] == pytest.approx([0.0, 0.2], abs=1e-15)
    assert np.linalg.norm(point.sigma[0]) == pytest.approx(0.2)


def test_ou_lambda_identity():
    # ||zeta_M' sigma||^2 = mu^2 / Sigma(v)^2
    for v in (-1.0, 0.0, 2.0):
        lam = lambda_at(OU, 0.0, v)
        assert lam**2 == pytest.approx(
            OU.mu_scalar**2 / float(OU.sigma_of(v)) ** 2, rel=1e-12
        )
        # consistent with the generic Merton route
        point = coefficients_at(OU, 0.0, v)
        from kellycap.projection import merton_proportion

        assert lam == pytest.approx(
            merton_proportion(point.mu, point.sigma).lam, rel=1e-12
        )


def test_ou_step_fixed_point():
    assert ou_step(OU, OU.vbar, 0.01, 0.0) == OU.vbar


def test_ou_step_fast_mean_reversion_limit():
    fast = OUStochVolMarket(nu=1e8, vbar=1.3, rho=0.0, mu_scalar=0.05, r=0.03)
    assert ou_step(fast, 5.0, 1.0, 1.0) == pytest.approx(1.3, abs=1e-3)


def test_ou_step_requires_positive_dt():
    with pytest.raises(ValueError):
        ou_step(OU, 0.0, 0.0, 0.0)


def test_ou_path_matches_stepping():
    rng1 = np.random.default_rng(5)
    path = ou_path(OU, 50, 0.1, rng1)
    rng2 = np.random.default_rng(5)
    v = OU.v0
    for k in range(50):
        v = ou_step(OU, v, 0.1, rng2.standard_normal())
        assert path[k] == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_ou_stationary_variance():
    rng = np.random.default_rng(77)
    v = ou_path(OU, 1_000_000, 0.01, rng)
    dev2 = (v - OU.vbar) ** 2
    bm = np.array([b.mean() for b in np.array_split(dev2, 64)])
    se = bm.std(ddof=1) / math.sqrt(64)
    assert abs(dev2.mean() - 1.0 / (2.0 * OU.nu)) <= 4.0 * se


def test_ou_one_step_preserves_stationary_law():
    rng = np.random.default_rng(13)
    n = 100_000
    v0 = OU.vbar + rng.standard_normal(n) / math.sqrt(2.0 * OU.nu)
    v1 = ou_step(OU, v0, 0.05, rng.standard_normal(n))
    stat = kstest(v1, "norm", args=(OU.vbar, 1.0 / math.sqrt(2.0 * OU.nu)))
    assert stat.pvalue > 1e-3


def test_lambda_bounded_by_vol_bounds():
    rng = np.random.default_rng(21)
    v = ou_path(OU, 10_000, 0.01, rng)
    lam = np.abs(OU.mu_scalar) / np.asarray(OU.sigma_of(v))
    assert lam.min() >= abs(OU.mu_scalar) / OU.sig_hi - 1e-12
    assert lam.max() <= abs(OU.mu_scalar) / OU.sig_lo + 1e-12


# ---------------------------------------------------------------------------
# ergodic functional
# ---------------------------------------------------------------------------


def test_z_constant_market_is_pointwise(base_market):
    phi = lambda x: x**3 + 1.0
    zq = z_quadrature(base_market, phi, 16)
    assert zq.value == pytest.approx(phi(0.25), rel=1e-14)
    assert zq.error_estimate == 0.0
    zt = z_time_average(base_market, phi, horizon=10.0, dt=0.1)
    assert zt.value == pytest.approx(phi(0.25), rel=1e-14)
    assert zt.method == "time_average"


def test_z_ou_normalization():
    z = z_quadrature(OU, lambda x: 1.0, 50)
    assert z.value == pytest.approx(1.0, abs=1e-12)


def test_z_periodic_matches_time_average():
    model = sin_market(period=1.0)
    phi = lambda x: x * x
    zq = z_quadrature(model, phi, nodes=400)
    zt = z_time_average(model, phi, horizon=200.0, dt=0.01)
    assert zt.value == pytest.approx(zq.value, rel=1e-3)


def test_z_ou_quadrature_vs_time_average():
    phi = lambda x: x * x
    zq = z_quadrature(OU, phi, nodes=50)
    zt = z_time_average(OU, phi, horizon=800.0, dt=0.01, seed=3)
    assert abs(zt.value - zq.value) <= 3.0 * zt.error_estimate


def test_z_time_average_error_halves_with_horizon():
    # relative error should drop roughly like 1/sqrt(T); allow slack for noise
    phi = lambda x: x * x
    zq = z_quadrature(OU, phi, nodes=60).value
    errs = []
    for horizon in (250.0, 4000.0):
        vals = [
            abs(z_time_average(OU, phi, horizon, 0.01, seed=s).value - zq)
            for s in range(8)
        ]
        errs.append(np.mean(vals))
    assert errs[1] < 0.5 * errs[0]


def test_z_quadrature_rejects_tiny_node_count(base_market):
    with pytest.raises(ValueError):
        z_quadrature(base_market, lambda x: x, 1)


def test_ergodic_value_validation():
    with pytest.raises(ValueError):
        ErgodicValue(1.0, "quadrature", -1.0)


def test_market_point_validation():
    with pytest.raises(ValueError):
        MarketPoint(r=0.03, mu=[0.05, 0.01], sigma=[[0.2]])
    with pytest.raises(ValueError):
        MarketPoint(r=0.03, mu=[math.nan], sigma=[[0.2]])
    with pytest.raises(ValueError):
        MarketPoint(r=0.03, mu=[0.05, 0.05], sigma=[[0.2, 0.1], [0.2, 0.1]])


def test_ou_validation():
    with pytest.raises(ValueError):
        OUStochVolMarket(nu=0.0, vbar=0.0, rho=0.0, mu_scalar=0.05, r=0.03)
    with pytest.raises(ValueError):
        OUStochVolMarket(nu=1.0, vbar=0.0, rho=1.5, mu_scalar=0.05, r=0.03)
    with pytest.raises(ValueError):
        OUStochVolMarket(nu=1.0, vbar=0.0, rho=0.0, mu_scalar=0.05, r=0.03, sig_lo=0.7)
