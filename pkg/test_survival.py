#!/usr/bin/env python3
"""
生存確率の組み立て（積分・正規化・裾補正）のテスト
"""
import math
import sys

import numpy as np
import pytest

from errors import SolverError
from model import Exponential, ModelParams, derive_params
from survival import (TailContinuation, assemble, fit_power_tail, integrate_g1, normalize, tail_profile,
                      weighted_exponential_moment)
from volterra_solver import SolverConfig, solve_g1

CLAIMS = Exponential(rate=1.0)
MODEL = ModelParams(a=0.3, r=0.0, kappa=1.0, sigma=0.5, c=0.2, lam=0.2)
GAMMA = derive_params(MODEL).gamma


@pytest.fixture(scope='module')
def grid():
    return solve_g1(MODEL, CLAIMS, SolverConfig(u_max=400.0, n=8193))


@pytest.fixture(scope='module')
def curve(grid):
    return assemble(grid)


@pytest.mark.parametrize('I1, expected', [(0.0, 1.0), (1.0, 0.5), (3.0, 0.25)])
def test_normalize(I1, expected):
    assert normalize(I1) == pytest.approx(expected)


@pytest.mark.parametrize('I1', [-0.1, math.nan, math.inf])
def test_normalize_rejects_invalid(I1):
    with pytest.raises(ValueError):
        normalize(I1)


def test_fit_power_tail_recovers_exponent():
    u = np.linspace(1.0, 100.0, 500)
    p, A, spread = fit_power_tail(u, 3.0 * u ** -2.5, 10.0)
    assert p == pytest.approx(2.5, rel=1e-10)
    assert A == pytest.approx(3.0, rel=1e-10)
    assert spread < 1e-12


def test_fit_power_tail_needs_points():
    u = np.linspace(0.0, 1.0, 5)
    with pytest.raises(SolverError):
        fit_power_tail(u, np.zeros(5), 0.5)


def test_phi_at_origin_is_phi0(curve):
    assert 0 < curve.phi0 < 1
    assert curve.phi[0] == pytest.approx(curve.phi0, rel=1e-15)
    assert curve.psi[0] == pytest.approx(1.0 - curve.phi0, rel=1e-12)


def test_monotone_curves(curve):
    assert np.all(np.diff(curve.phi) > 0)
    assert np.all(np.diff(curve.psi) < 0)
    assert np.all(curve.psi > 0)


def test_phi_plus_psi_is_one(curve):
    assert np.allclose(curve.phi + curve.psi, 1.0, rtol=0.0, atol=1e-12)


def test_integral_pieces(grid, curve):
    I1_grid, fit = integrate_g1(grid)
    assert curve.I1_grid == pytest.approx(I1_grid)
    assert curve.I1_tail == pytest.approx(fit.tail_mass)
    assert curve.I1_tail < 0.01 * curve.I1
    assert curve.phi0 == pytest.approx(1.0 / (1.0 + curve.I1))
    assert curve.tail_error_bound >= 0


def test_tail_exponent_close_to_gamma(curve):
    assert curve.tail_exponent == pytest.approx(GAMMA, rel=0.15)


def test_psi_at_grid_and_beyond(curve):
    index = 1000
    assert curve.psi_at(curve.nodes[index]) == pytest.approx(curve.psi[index], rel=1e-12)
    beyond = curve.psi_at(2.0 * curve.u_max)
    assert 0 < beyond < curve.psi[-1]
    assert curve.phi_at(0.0) == pytest.approx(curve.phi0)


def test_normalization_independent_of_scale(curve):
    doubled = assemble(solve_g1(MODEL, CLAIMS, SolverConfig(u_max=400.0, n=8193), scale=3.0))
    assert doubled.phi0 == pytest.approx(curve.phi0, rel=1e-10)
    assert np.allclose(doubled.phi, curve.phi, rtol=1e-10)


def test_doubling_u_max_keeps_I1(curve):
    wider = assemble(solve_g1(MODEL, CLAIMS, SolverConfig(u_max=800.0, n=16385)))
    assert curve.phi0 * abs(wider.I1 - curve.I1) <= curve.tail_error_bound
    assert abs(wider.psi_at(curve.u_max) - curve.psi[-1]) <= curve.tail_error_bound


def test_tail_bracket(grid, curve):
    _, fit = integrate_g1(grid)
    assert fit.lower_mass <= fit.tail_mass * (1.0 + 1e-12)
    assert curve.phi0 * fit.upper_mass >= curve.psi[-1] - curve.tail_error_bound
    assert curve.tail_error_bound < curve.psi[-1]


def test_tail_profile_removes_exponential_factor(grid):
    profile = tail_profile(grid)
    u = grid.nodes
    assert profile[0] == 0.0
    assert profile[-1] == pytest.approx(grid.g1[-1] * math.exp(-derive_params(MODEL).alpha / u[-1]))
    assert profile[100] == pytest.approx(grid.H[100] * u[100] ** -GAMMA, rel=1e-10)


@pytest.mark.parametrize('p, beta, expected', [
    (2.0, 0.0, 1.0),
    (3.5, 0.0, 1.0 / 2.5),
    (2.0, 1.0, math.e - 1.0),
    (3.0, 1.0, 1.0),
])
def test_weighted_exponential_moment(p, beta, expected):
    assert weighted_exponential_moment(p, beta) == pytest.approx(expected, rel=1e-10)


def test_weighted_exponential_moment_diverges_below_one():
    assert weighted_exponential_moment(1.0, 0.5) == math.inf


def test_continuation_matches_grid_at_u_max(grid, curve):
    continuation = curve.continuation
    assert continuation.h_at(grid.u_max) == pytest.approx(grid.H[-1], rel=1e-10)
    assert continuation.bounded
    assert continuation.limit >= grid.H[-1]
    assert curve.psi_at(curve.u_max * (1.0 + 1e-9)) == pytest.approx(curve.psi[-1], rel=1e-6)


def test_continuation_mass_of_constant_profile():
    continuation = TailContinuation(offset=2.0, slope=0.0, exponent=math.inf, gamma=3.0, alpha=0.0)
    assert continuation.mass(10.0) == pytest.approx(2.0 * 10.0 ** -2 / 2.0, rel=1e-10)
    assert continuation.limit == 2.0


def test_unbounded_continuation():
    continuation = TailContinuation(offset=0.0, slope=1.0, exponent=0.7, gamma=2.5, alpha=1.0)
    assert not continuation.bounded
    assert continuation.limit == math.inf
    assert np.isfinite(continuation.mass(100.0))


# γ ≈ 2.22, α ≈ 33.3, μ ≈ 22.2
REFERENCE = ModelParams(a=0.1, r=0.0, kappa=1.0, sigma=0.3, c=1.5, lam=1.0)


@pytest.fixture(scope='module')
def reference_short():
    return assemble(solve_g1(REFERENCE, CLAIMS, SolverConfig(u_max=200.0, n=4097)))


@pytest.fixture(scope='module')
def reference_long():
    return assemble(solve_g1(REFERENCE, CLAIMS, SolverConfig(u_max=800.0, n=16385)))


def test_reference_psi_at_u_max_within_tail_bound(reference_short, reference_long):
    short, long = reference_short, reference_long
    assert abs(long.psi_at(200.0) - short.psi[-1]) <= short.tail_error_bound


def test_reference_phi0_within_tail_bound(reference_short, reference_long):
    assert abs(reference_long.phi0 - reference_short.phi0) <= reference_short.tail_error_bound


def test_lambda_zero_curve():
    m = ModelParams(a=0.3, r=0.0, kappa=1.0, sigma=0.5, c=0.2, lam=0.0)
    curve = assemble(solve_g1(m, CLAIMS, SolverConfig(u_max=20.0, n=513)))
    assert curve.phi0 == 1.0
    assert curve.I1 == 0.0
    assert np.all(curve.psi == 0.0)
    assert curve.tail_exponent is None
    assert curve.psi_at(100.0) == 0.0


def test_rows_and_summary(curve):
    rows = curve.to_rows()
    assert len(rows) == curve.nodes.size
    summary = curve.summary()
    assert summary['phi0'] == curve.phi0
    assert summary['I1'] == pytest.approx(summary['I1_grid'] + summary['I1_tail'])


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
