"""Acceptance suite: the ten end-to-end criteria at their stated tolerances.

Each test prints one PASS/FAIL line (run pytest with -s to see them all).
The same checks back the `kellycap verify` subcommand.
"""

import pytest

from kellycap import acceptance

RUNTIME_LIMITS = {1: 120.0, 2: 60.0, 4: 30.0, 7: 120.0}


def _run(criterion):
    result = acceptance._timed(criterion)
    print()
    print(result.line())
    assert result.passed, result.detail
    limit = RUNTIME_LIMITS.get(result.number)
    if limit is not None:
        assert result.runtime_s <= limit, (
            f"criterion {result.number} took {result.runtime_s:.1f}s, limit {limit}s"
        )
    return result


def test_criterion_01_risk_formula_fidelity():
    _run(acceptance.criterion_1)


def test_criterion_02_projection_collinearity():
    _run(acceptance.criterion_2)


def test_criterion_03_delta_closed_forms():
    _run(acceptance.criterion_3)


def test_criterion_04_unconstrained_growth():
    _run(acceptance.criterion_4)


def test_criterion_05_constrained_growth_and_drift_constant():
    _run(acceptance.criterion_5)


def test_criterion_06_current_vs_limiting():
    _run(acceptance.criterion_6)


def test_criterion_07_ou_ergodicity():
    _run(acceptance.criterion_7)


def test_criterion_08_relative_optimality():
    _run(acceptance.criterion_8)


def test_criterion_09_dominance_sweep():
    _run(acceptance.criterion_9)


def test_criterion_10_cli_determinism_and_exit_codes():
    _run(acceptance.criterion_10)
