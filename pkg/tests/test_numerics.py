import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kellycap.numerics import (
    BracketError,
    ConvergenceError,
    RootBracket,
    gauss_expectation,
    log_norm_cdf,
    norm_cdf,
    norm_quantile,
    solve_increasing_root,
)

# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def cdf_quadrature_oracle(z: float) -> float:
    """N(z) by 80-node Gauss-Legendre integration of the density on [0, |z|]
    in extended precision; independent of erfc."""
    nodes, weights = np.polynomial.legendre.leggauss(80)
    a = np.longdouble(abs(z))
    x = np.longdouble(0.5) * a * (np.longdouble(1.0) + nodes.astype(np.longdouble))
    dens = np.exp(-np.longdouble(0.5) * x * x) / np.sqrt(
        np.longdouble(2.0) * np.longdouble(math.pi)
    )
    half = np.longdouble(0.5) * a * np.sum(weights.astype(np.longdouble) * dens)
    val = np.longdouble(0.5) + (half if z >= 0 else -half)
    return float(val)


def quantile_bisection_oracle(p: float) -> float:
    lo, hi = -40.0, 40.0
    for _ in range(220):
        mid = 0.5 * (lo + hi)
        if norm_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# norm_cdf
# ---------------------------------------------------------------------------


def test_cdf_at_zero():
    assert norm_cdf(0.0) == 0.5


def test_cdf_tail_bound():
    assert norm_cdf(8.0) > 1.0 - 1e-14


def test_cdf_five_percent_point():
    assert abs(norm_cdf(-1.6448536269514722) - 0.05) <= 1e-14


def test_cdf_against_quadrature_oracle():
    worst = 0.0
    for z in np.linspace(-8.0, 8.0, 161):
        worst = max(worst, abs(norm_cdf(float(z)) - cdf_quadrature_oracle(float(z))))
    assert worst <= 1e-14


def test_cdf_monotone_and_in_unit_interval():
    grid = np.linspace(-8.0, 8.0, 2001)
    vals = [norm_cdf(float(z)) for z in grid]
    assert all(0.0 < v < 1.0 for v in vals)
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    # strictly increasing wherever consecutive values are resolvable in
    # float64 (near +8 the CDF is within an ulp of 1 and must plateau)
    strict = [v for z, v in zip(grid, vals) if z <= 5.0]
    assert all(b > a for a, b in zip(strict, strict[1:]))


def test_cdf_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ValueError):
            norm_cdf(bad)


def test_log_cdf_matches_log_of_cdf_and_deep_tail():
    for z in np.linspace(-36.0, 8.0, 111):
        assert abs(log_norm_cdf(float(z)) - math.log(norm_cdf(float(z)))) <= 1e-12 * max(
            1.0, abs(math.log(norm_cdf(float(z))))
        )
    # deep-tail branch: compare against the dominant quadratic term
    z = -60.0
    assert abs(log_norm_cdf(z) - (-0.5 * z * z - math.log(-z * math.sqrt(2 * math.pi)))) < 1e-3


# ---------------------------------------------------------------------------
# norm_quantile
# ---------------------------------------------------------------------------


def test_quantile_median():
    assert norm_quantile(0.5) == 0.0


def test_quantile_five_percent():
    assert abs(norm_quantile(0.05) - (-1.6448536269514722)) <= 1e-14
    assert abs(norm_quantile(0.05) - quantile_bisection_oracle(0.05)) <= 1e-15


def test_quantile_roundtrip_example():
    assert abs(norm_quantile(norm_cdf(1.3)) - 1.3) <= 1e-12


def test_quantile_of_cdf_identity():
    # z >= 4 maps to p within a few ulp of 1, where float64 p can no longer
    # resolve z; the identity is checked through the mirrored (small-tail)
    # representation, which carries the information
    for z in np.linspace(-6.0, 6.0, 241):
        z = float(z)
        if z <= 0:
            err = abs(norm_quantile(norm_cdf(z)) - z)
        else:
            err = abs(-norm_quantile(norm_cdf(-z)) - z)
        assert err <= 1e-12


def test_cdf_of_quantile_identity():
    for p in np.linspace(1e-6, 1.0 - 1e-6, 301):
        assert abs(norm_cdf(norm_quantile(float(p))) - p) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-12, max_value=1.0 - 1e-12))
def test_quantile_roundtrip_property(p):
    assert abs(norm_cdf(norm_quantile(p)) - p) <= 1e-12


def test_quantile_monotone():
    ps = np.linspace(0.001, 0.999, 999)
    qs = [norm_quantile(float(p)) for p in ps]
    assert all(b > a for a, b in zip(qs, qs[1:]))


def test_quantile_domain_errors():
    for bad in (0.0, 1.0, -0.2, 1.5, math.nan):
        with pytest.raises(ValueError):
            norm_quantile(bad)


# ---------------------------------------------------------------------------
# solve_increasing_root
# ---------------------------------------------------------------------------


def test_root_linear():
    root = solve_increasing_root(lambda x: x - 2.0, RootBracket(0.0, 5.0))
    assert abs(root - 2.0) <= 1e-11


def test_root_sqrt2():
    root = solve_increasing_root(lambda x: x * x - 2.0, RootBracket(0.0, 2.0))
    assert abs(root - math.sqrt(2.0)) <= 1e-11


def test_root_lel_compliance_matches_closed_form(params):
    # g(beta) - h for the LEL pair has the closed-form root
    # [N^{-1}(alpha) - N^{-1}(alpha (1-a) e^{-r tau})] / (lam sqrt(tau))
    from kellycap.constraints import ConstraintPair, g_eval
    from kellycap.risk import RiskKind

    pair = ConstraintPair.relative(RiskKind.LEL, 0.01, params)
    lam = 0.8
    h = -math.log1p(-0.01)
    root = solve_increasing_root(
        lambda b: g_eval(pair, lam, b) - h,
        RootBracket(0.0, 1.0, tol_abs=1e-14, tol_rel=1e-14),
    )
    closed = (
        norm_quantile(params.alpha)
        - norm_quantile(params.alpha * (1.0 - 0.01) * math.exp(-params.r * params.tau))
    ) / (lam * math.sqrt(params.tau))
    assert abs(root - closed) <= 1e-10


def test_root_randomized_monotone_functions():
    rng = np.random.default_rng(7)
    bracket_kw = dict(tol_abs=1e-12, tol_rel=1e-15)
    for _ in range(1000):
        a = rng.uniform(0.1, 3.0)
        b = rng.uniform(0.0, 2.0)
        c = rng.uniform(-5.0, 5.0)
        fn = lambda x, a=a, b=b, c=c: a * (x - c) + b * (x - c) ** 3
        lo = c - rng.uniform(0.5, 6.0)
        hi = c + rng.uniform(0.5, 6.0)
        root = solve_increasing_root(fn, RootBracket(lo, hi, **bracket_kw))
        assert abs(fn(root)) <= 1e-12


def test_root_newton_acceleration_agrees():
    fn = lambda x: x**3 - 7.0
    dfn = lambda x: 3.0 * x * x
    plain = solve_increasing_root(fn, RootBracket(0.0, 3.0))
    newton = solve_increasing_root(fn, RootBracket(0.0, 3.0), dfn=dfn)
    assert abs(plain - newton) <= 1e-10
    assert abs(newton - 7.0 ** (1.0 / 3.0)) <= 1e-11


def test_root_bracket_error():
    with pytest.raises(BracketError):
        solve_increasing_root(lambda x: x + 10.0, RootBracket(0.0, 1.0))


def test_root_convergence_error():
    with pytest.raises(ConvergenceError):
        solve_increasing_root(
            lambda x: x - math.pi,
            RootBracket(0.0, 10.0, tol_abs=1e-300, tol_rel=1e-300, max_iter=5),
        )


def test_root_bracket_validation():
    with pytest.raises(ValueError):
        RootBracket(2.0, 1.0)
    with pytest.raises(ValueError):
        RootBracket(0.0, 1.0, tol_abs=0.0)
    with pytest.raises(ValueError):
        RootBracket(0.0, 1.0, max_iter=0)


# ---------------------------------------------------------------------------
# gauss_expectation
# ---------------------------------------------------------------------------


def gaussian_moment(k: int, mean: float, var: float) -> float:
    """E[X^k] for X ~ N(mean, var) by the binomial/central-moment recursion."""
    total = 0.0
    for j in range(0, k + 1, 2):
        central = var ** (j // 2) * math.prod(range(1, j, 2)) if j else 1.0
        total += math.comb(k, j) * central * mean ** (k - j)
    return total


def test_gauss_normalization():
    assert abs(gauss_expectation(lambda x: 1.0, 3.0, 2.5, 7) - 1.0) <= 1e-12


def test_gauss_mean():
    assert abs(gauss_expectation(lambda x: x, -1.7, 0.8, 12) - (-1.7)) <= 1e-12


def test_gauss_second_moment_halved_concentration():
    # variance of N(0, 1/(2 nu)) with nu = 1 is 1/2
    assert abs(gauss_expectation(lambda x: x * x, 0.0, 1.0, 16) - 0.5) <= 1e-12


def test_gauss_polynomial_exactness():
    rng = np.random.default_rng(11)
    for nodes in (2, 5, 9):
        mean = float(rng.uniform(-2.0, 2.0))
        nu = float(rng.uniform(0.3, 4.0))
        var = 1.0 / (2.0 * nu)
        coeffs = rng.uniform(-2.0, 2.0, size=2 * nodes)
        phi = lambda x, c=coeffs: sum(ci * x**i for i, ci in enumerate(c))
        exact = sum(
            ci * gaussian_moment(i, mean, var) for i, ci in enumerate(coeffs)
        )
        got = gauss_expectation(phi, mean, nu, nodes)
        assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


def test_gauss_domain_errors():
    with pytest.raises(ValueError):
        gauss_expectation(lambda x: 1.0, 0.0, -1.0, 8)
    with pytest.raises(ValueError):
        gauss_expectation(lambda x: 1.0, 0.0, 1.0, 1)
