#!/usr/bin/env python3
"""
漸近解析（L, C∞, 領域判定）のテスト
"""
import math
import sys

import pytest

from asymptotics import (DIVERGENT, POWER_LAW, analyze, c_infinity, classify_regime,
                         geometric_points, limit_L, octave_growth, plateau_series, psi_slope)
from errors import DivergentLimitError
from model import DerivedParams, Exponential, ModelParams, Pareto
from survival import assemble
from volterra_solver import SolverConfig, solve_g1

FAST = ModelParams(a=0.3, r=0.0, kappa=1.0, sigma=0.5, c=0.2, lam=0.2)
HEAVY = ModelParams(a=0.2, r=0.0, kappa=1.0, sigma=0.4, c=1.0, lam=1.0)
REFERENCE = ModelParams(a=0.1, r=0.0, kappa=1.0, sigma=0.3, c=1.5, lam=1.0)


@pytest.fixture(scope='module')
def power_law():
    claims = Exponential(rate=1.0)
    grid = solve_g1(FAST, claims, SolverConfig(u_max=800.0, n=16385))
    curve = assemble(grid)
    return claims, grid, curve, analyze(FAST, claims, grid, curve)


@pytest.fixture(scope='module')
def divergent():
    claims = Pareto(index=1.2, scale=1.0)
    grid = solve_g1(HEAVY, claims, SolverConfig(u_max=400.0, n=8193))
    curve = assemble(grid)
    return claims, grid, curve, analyze(HEAVY, claims, grid, curve)


@pytest.fixture(scope='module')
def reference():
    # γ ≈ 2.22, α ≈ 33.3, μ ≈ 22.2
    claims = Exponential(rate=1.0)
    grid = solve_g1(REFERENCE, claims, SolverConfig(u_max=200.0, n=4097))
    curve = assemble(grid)
    return grid, curve, analyze(REFERENCE, claims, grid, curve)


def test_c_infinity_formula():
    dp = DerivedParams(gamma=3.0, alpha=1.0, mu=1.0)
    assert c_infinity(4.0, dp) == pytest.approx(2.0)
    assert c_infinity(0.0, dp) == 0.0


def test_c_infinity_undefined_when_divergent():
    dp = DerivedParams(gamma=3.0, alpha=1.0, mu=1.0)
    with pytest.raises(DivergentLimitError):
        c_infinity(1.0, dp, DIVERGENT)


def test_geometric_points_and_growth():
    points = geometric_points(8.0, 4)
    assert list(points) == [1.0, 2.0, 4.0, 8.0]
    growth = octave_growth(points, points ** 0.5, 8.0)
    assert growth == pytest.approx([2 ** 0.5, 2 ** 0.5])


def test_classify_regime():
    assert classify_regime(FAST, Exponential(rate=1.0)).regime == POWER_LAW
    assert classify_regime(HEAVY, Pareto(index=1.2, scale=1.0)).regime == DIVERGENT
    assert classify_regime(HEAVY, Pareto(index=5.0, scale=1.0)).regime == POWER_LAW


def test_power_law_regime(power_law):
    _, _, _, report = power_law
    assert report.regime == POWER_LAW
    assert not report.divergent_flag
    assert report.L_estimate > 0
    assert report.C_infinity == pytest.approx(report.L_estimate / (report.gamma - 1.0))


def test_limit_estimates_agree(power_law):
    _, grid, curve, _ = power_law
    estimate = limit_L(grid, curve)
    assert estimate.plateau == pytest.approx(estimate.tail_continuation, rel=0.10)
    assert estimate.uncertainty < 0.10
    assert all(r <= 1.10 for r in estimate.growth_per_octave)


def test_plateau_approaches_c_infinity(power_law):
    _, _, _, report = power_law
    last = report.plateau_series[-1][1]
    assert last == pytest.approx(report.C_infinity, rel=0.15)


def test_psi_slope_matches_gamma(power_law):
    _, _, curve, report = power_law
    assert psi_slope(curve) == pytest.approx(-(report.gamma - 1.0), rel=0.10)


def test_plateau_series_points(power_law):
    _, _, curve, report = power_law
    series = plateau_series(curve, report.gamma)
    assert [u for u, _ in series] == [100.0, 200.0, 400.0, 800.0]
    assert all(v > 0 for _, v in series)


def test_divergent_regime(divergent):
    _, _, _, report = divergent
    assert report.regime == DIVERGENT
    assert report.divergent_flag
    assert report.C_infinity is None
    assert report.L_estimate is None
    assert len(report.subexp_ratio_series) > 0
    assert report.to_dict()['C_infinity'] is None


def test_divergent_limit_raises(divergent):
    _, grid, curve, _ = divergent
    with pytest.raises(DivergentLimitError):
        limit_L(grid, curve)


def test_divergent_plateau_keeps_growing(divergent):
    _, _, _, report = divergent
    assert all(r > 1.10 for r in report.plateau_growth[-2:])


def test_reference_plateau_is_flat(reference):
    _, curve, report = reference
    u = curve.nodes
    tail = u >= curve.u_max / math.sqrt(10.0)
    plateau = u[tail] ** (report.gamma - 1.0) * curve.psi[tail]
    assert (plateau.max() - plateau.min()) / plateau.max() < 0.10
    assert plateau[-1] == pytest.approx(report.C_infinity, rel=0.10)


def test_reference_psi_slope(reference):
    _, curve, report = reference
    assert report.psi_slope == pytest.approx(-(report.gamma - 1.0), rel=0.10)


def test_lambda_zero_has_zero_constant():
    claims = Exponential(rate=1.0)
    m = ModelParams(a=0.3, r=0.0, kappa=1.0, sigma=0.5, c=0.2, lam=0.0)
    grid = solve_g1(m, claims, SolverConfig(u_max=50.0, n=1025))
    report = analyze(m, claims, grid, assemble(grid))
    assert report.C_infinity == 0.0
    assert report.psi_slope is None


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
