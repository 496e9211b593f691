#!/usr/bin/env python3
"""
モデルパラメータ・請求額分布のテスト
"""
import math
import sys

import numpy as np
import pytest

from errors import AssumptionError, ConfigError, DomainError
from model import (Deterministic, Empirical, Exponential, Lognormal, ModelParams, Pareto,
                   check_assumptions, claim_distribution_from_spec, derive_params, moment,
                   sample, tail)


@pytest.fixture
def mc_model():
    return ModelParams(a=0.1, r=0.0, kappa=1.0, sigma=0.3, c=1.5, lam=1.0)


def test_derived_params(mc_model):
    dp = derive_params(mc_model)
    assert dp.gamma == pytest.approx(0.2 / 0.09)
    assert dp.alpha == pytest.approx(3.0 / 0.09)
    assert dp.mu == pytest.approx(2.0 / 0.09)
    assert dp.lambda_over_c == pytest.approx(1.0 / 1.5)


def test_eta_mixes_risky_and_riskless_drift():
    m = ModelParams(a=0.2, r=0.05, kappa=0.5, sigma=0.4, c=1.0, lam=1.0)
    assert m.eta == pytest.approx(0.125)
    assert m.diffusion == pytest.approx(0.2)
    assert derive_params(m).gamma == pytest.approx(2 * 0.125 / 0.04)


@pytest.mark.parametrize('kwargs', [
    dict(sigma=0.0),
    dict(c=-1.0),
    dict(lam=-0.5),
    dict(kappa=1.5),
    dict(r=-0.01),
])
def test_invalid_model_params(kwargs):
    base = dict(a=0.1, r=0.0, kappa=1.0, sigma=0.3, c=1.5, lam=1.0)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        ModelParams(**base)


def test_exponential_tail_and_moment():
    d = Exponential(rate=2.0)
    assert tail(d, 1.0) == pytest.approx(math.exp(-2.0))
    assert tail(d, 0.0) == 1.0
    assert moment(d, 1.0) == pytest.approx(0.5)
    assert moment(d, 2.0) == pytest.approx(0.5)


def test_tail_rejects_negative_argument():
    with pytest.raises(DomainError):
        tail(Exponential(rate=1.0), -1.0)


def test_moment_rejects_non_positive_order():
    with pytest.raises(DomainError):
        moment(Exponential(rate=1.0), 0.0)


def test_pareto_moments():
    d = Pareto(index=3.0, scale=1.0)
    assert moment(d, 1.0) == pytest.approx(0.5)
    assert moment(d, 3.0) == math.inf
    assert math.isinf(moment(Pareto(index=1.2, scale=1.0), 1.5))
    assert tail(d, 1.0) == pytest.approx(2.0 ** -3)


def test_lognormal_median():
    d = Lognormal(location=0.5, shape=0.8)
    assert tail(d, math.exp(0.5)) == pytest.approx(0.5)
    assert moment(d, 1.0) == pytest.approx(math.exp(0.5 + 0.32))


def test_deterministic_tail_is_right_continuous():
    d = Deterministic(atom=2.0)
    assert tail(d, 1.999) == 1.0
    assert tail(d, 2.0) == 0.0
    assert d.atoms() == [2.0]


def test_empirical_distribution():
    d = Empirical((3.0, 1.0, 2.0))
    assert d.values == (1.0, 2.0, 3.0)
    assert tail(d, 2.0) == pytest.approx(1.0 / 3.0)
    assert tail(d, 0.5) == 1.0
    assert moment(d, 1.0) == pytest.approx(2.0)
    assert d.sample_based
    assert float(d.from_uniform(1.0)) == 1.0
    assert float(d.from_uniform(1e-9)) == 3.0


def test_empirical_rejects_non_positive_values():
    with pytest.raises(ConfigError):
        Empirical((0.0, 1.0))


def test_sample_is_reproducible():
    d = Exponential(rate=2.0)
    a = sample(d, np.random.default_rng(7), 1000)
    b = sample(d, np.random.default_rng(7), 1000)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)


def test_sample_mean():
    d = Exponential(rate=2.0)
    values = sample(d, np.random.default_rng(11), 20000)
    assert np.mean(values) == pytest.approx(0.5, abs=0.02)


def test_pareto_sampling_matches_tail():
    d = Pareto(index=2.5, scale=1.0)
    values = sample(d, np.random.default_rng(3), 20000)
    assert np.mean(values > 1.0) == pytest.approx(float(tail(d, 1.0)), abs=0.01)


def test_claim_distribution_from_spec():
    d = claim_distribution_from_spec({'kind': 'pareto', 'index': 2.5, 'scale': 1.0})
    assert isinstance(d, Pareto)
    assert d.to_spec() == {'kind': 'pareto', 'index': 2.5, 'scale': 1.0}


def test_claim_distribution_missing_field():
    with pytest.raises(ConfigError, match='claims.rate'):
        claim_distribution_from_spec({'kind': 'exponential'})


def test_claim_distribution_unknown_kind():
    with pytest.raises(ConfigError, match='unknown'):
        claim_distribution_from_spec({'kind': 'weibull'})


@pytest.mark.parametrize('spec, field_name', [
    ({'kind': 'exponential', 'rate': 'fast'}, 'claims.rate'),
    ({'kind': 'pareto', 'index': True, 'scale': 1.0}, 'claims.index'),
    ({'kind': 'empirical', 'values': [1.0, 'x']}, 'claims.values'),
    ({'kind': 'empirical', 'values': 'x'}, 'claims.values'),
])
def test_claim_distribution_invalid_value(spec, field_name):
    with pytest.raises(ConfigError, match=field_name):
        claim_distribution_from_spec(spec)


@pytest.mark.parametrize('d', [
    Exponential(rate=1.0),
    Pareto(index=1.2, scale=1.0),
    Lognormal(location=0.0, shape=0.5),
    Deterministic(atom=1.0),
    Empirical((0.5, 1.0, 1.0, 3.0)),
], ids=lambda d: d.kind)
def test_tail_is_non_increasing(d):
    x = np.linspace(0.0, 10.0, 1000)
    values = tail(d, x)
    assert np.all(np.diff(values) <= 0)
    assert np.all((values >= 0) & (values <= 1))


@pytest.mark.parametrize('s', [0.25, 3.0, 40.0])
def test_derived_params_invariant_under_rescaling(mc_model, s):
    scaled = ModelParams(a=mc_model.a * s, r=mc_model.r * s, kappa=mc_model.kappa,
                         sigma=mc_model.sigma * math.sqrt(s), c=mc_model.c * s, lam=mc_model.lam * s)
    dp, dp_scaled = derive_params(mc_model), derive_params(scaled)
    assert dp_scaled.gamma == pytest.approx(dp.gamma, rel=1e-12)
    assert dp_scaled.alpha == pytest.approx(dp.alpha, rel=1e-12)
    assert dp_scaled.mu == pytest.approx(dp.mu, rel=1e-12)


def test_assumptions_power_law(mc_model):
    report = check_assumptions(mc_model, Exponential(rate=1.0))
    assert report.a1_ok and report.a2_ok and report.a3_ok
    assert 0 < report.epsilon < 1
    assert report.epsilon < report.gamma - 1
    assert report.asymptotics_branch == 'power_law'
    report.require_solvable()


def test_assumptions_divergent_branch():
    m = ModelParams(a=0.2, r=0.0, kappa=1.0, sigma=0.4, c=1.0, lam=1.0)
    report = check_assumptions(m, Pareto(index=1.2, scale=1.0))
    assert report.gamma == pytest.approx(2.5)
    assert report.asymptotics_branch == 'divergent'
    assert report.epsilon == pytest.approx(0.6)
    assert check_assumptions(m, Pareto(index=5.0, scale=1.0)).asymptotics_branch == 'power_law'


def test_gamma_not_above_one_is_rejected():
    m = ModelParams(a=0.02, r=0.0, kappa=1.0, sigma=0.5, c=1.0, lam=1.0)
    report = check_assumptions(m, Exponential(rate=1.0))
    assert not report.a3_ok
    assert report.epsilon is None
    assert report.asymptotics_branch is None
    with pytest.raises(AssumptionError, match='gamma must exceed 1'):
        report.require_solvable()


def test_assumption_report_to_dict(mc_model):
    data = check_assumptions(mc_model, Exponential(rate=1.0)).to_dict()
    assert data['A3'] is True
    assert data['asymptotics_branch'] == 'power_law'
    assert data['failures'] == []


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
