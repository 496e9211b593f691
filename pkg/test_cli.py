#!/usr/bin/env python3
"""
コマンドラインインターフェースのテスト
"""
import json
import sys
from pathlib import Path

import jsonschema
import pytest

# プロジェクトのルートディレクトリをパスに追加
ROOT = Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT))

from cli import main
from storage import ResultStore

FAST_MODEL = """
[model]
a = 0.3
r = 0.0
kappa = 1.0
sigma = 0.5
c = 0.2
lambda = 0.2
"""

QUIET_MODEL = """
[model]
a = 0.1
r = 0.0
kappa = 1.0
sigma = 0.1
c = 1.5
lambda = 0.0
"""


def write_config(tmp_path: Path, body: str, name: str = 'run.toml') -> Path:
    path = tmp_path / name
    path.write_text(body, encoding='utf-8')
    return path


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv('RUIN_SEED', raising=False)


@pytest.fixture
def fast_config(tmp_path):
    return write_config(tmp_path, 'claims = { kind = "exponential", rate = 1.0 }\n' + FAST_MODEL + """
[solver]
u_max = 100.0
n = 4097
""")


@pytest.fixture
def quiet_config(tmp_path):
    return write_config(tmp_path, 'claims = { kind = "exponential", rate = 1.0 }\n' + QUIET_MODEL + """
[solver]
n = 1025

[simulation]
n_paths = 300
u_values = [0.5, 1.0, 2.0, 5.0]
""")


def test_missing_field_exits_with_config_error(tmp_path, capsys):
    body = 'claims = { kind = "exponential", rate = 1.0 }\n' + FAST_MODEL.replace('sigma = 0.5\n', '')
    config = write_config(tmp_path, body)
    code = main(['solve', '--config', str(config), '--out', str(tmp_path / 'out')])
    assert code == 2
    assert 'model.sigma' in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    code = main(['solve', '--config', str(tmp_path / 'absent.toml')])
    assert code == 2
    assert 'config_missing' in capsys.readouterr().err


def test_gamma_not_above_one_exits_with_assumption_error(tmp_path, capsys):
    code = main(['solve', '--config', str(ROOT / 'config' / 'gamma_below_one.toml'),
                 '--out', str(tmp_path / 'out')])
    assert code == 3
    assert 'gamma must exceed 1' in capsys.readouterr().err


@pytest.mark.parametrize('claims, field_name', [
    ('claims = { kind = "exponential", rate = "fast" }', 'claims.rate'),
    ('claims = { kind = "empirical", values = [1.0, "x"] }', 'claims.values'),
])
def test_invalid_claim_value_exits_with_config_error(tmp_path, capsys, claims, field_name):
    config = write_config(tmp_path, claims + '\n' + FAST_MODEL)
    code = main(['solve', '--config', str(config), '--out', str(tmp_path / 'out')])
    assert code == 2
    assert field_name in capsys.readouterr().err


def test_picard_limit_exits_with_solver_error(tmp_path, capsys):
    config = write_config(tmp_path, 'claims = { kind = "exponential", rate = 1.0 }\n' + FAST_MODEL + """
[solver]
u_max = 50.0
n = 1025
picard_max_iter = 1
""")
    code = main(['solve', '--config', str(config), '--out', str(tmp_path / 'out')])
    assert code == 4
    assert 'max_iterations' in capsys.readouterr().err


def test_solve_writes_outputs(tmp_path, fast_config):
    out = tmp_path / 'out'
    assert main(['solve', '--config', str(fast_config), '--out', str(out)]) == 0

    store = ResultStore(out)
    summary = store.read_json('summary.json')
    schema = json.loads((ROOT / 'json' / 'summary.schema.json').read_text(encoding='utf-8'))
    jsonschema.validate(summary, schema)
    assert summary['n'] == 4097
    assert summary['model']['lambda'] == 0.2

    rows = store.read_csv('survival.csv')
    phi = [row['phi'] for row in rows]
    assert len(rows) == 4097
    assert all(b > a for a, b in zip(phi, phi[1:]))
    assert rows[0]['phi'] == pytest.approx(summary['phi0'], rel=1e-15)
    assert store.exists('g1.csv')


def test_grid_flag_overrides_config(tmp_path, fast_config):
    out = tmp_path / 'out'
    assert main(['solve', '--config', str(fast_config), '--out', str(out), '--grid', '2049']) == 0
    assert ResultStore(out).read_json('summary.json')['n'] == 2049


def test_asymptotics_lambda_zero(tmp_path, quiet_config):
    out = tmp_path / 'out'
    assert main(['asymptotics', '--config', str(quiet_config), '--out', str(out)]) == 0
    report = ResultStore(out).read_json('asymptotics.json')
    assert report['C_infinity'] == 0.0
    assert report['regime'] == 'power_law'


def test_asymptotics_divergent(tmp_path):
    config = write_config(tmp_path, """
claims = { kind = "pareto", index = 1.2, scale = 1.0 }

[model]
a = 0.2
r = 0.0
kappa = 1.0
sigma = 0.4
c = 1.0
lambda = 1.0

[solver]
u_max = 400.0
n = 8193
""")
    out = tmp_path / 'out'
    assert main(['asymptotics', '--config', str(config), '--out', str(out)]) == 0
    report = ResultStore(out).read_json('asymptotics.json')
    assert report['regime'] == 'divergent'
    assert report['C_infinity'] is None
    assert report['divergent'] is True
    assert len(report['subexp_ratio']) > 0

    assert main(['report', '--config', str(config), '--out', str(out)]) == 0
    svg = (out / 'report.svg').read_text(encoding='utf-8')
    assert 'id="subexp-ratio"' in svg
    assert 'id="asymptote"' not in svg


def test_report_is_deterministic(tmp_path, fast_config):
    first = tmp_path / 'first'
    second = tmp_path / 'second'
    assert main(['report', '--config', str(fast_config), '--out', str(first)]) == 0
    assert main(['report', '--config', str(fast_config), '--out', str(second)]) == 0
    svg = (first / 'report.svg').read_bytes()
    assert svg == (second / 'report.svg').read_bytes()
    assert b'id="asymptote"' in svg
    assert b'id="psi"' in svg


def test_simulate_is_reproducible_across_workers(tmp_path, fast_config):
    common = ['--config', str(fast_config), '--seed', '7', '--paths', '4200']
    assert main(['simulate', *common, '--out', str(tmp_path / 'one'), '--workers', '1']) == 0
    assert main(['simulate', *common, '--out', str(tmp_path / 'two'), '--workers', '2']) == 0
    one = (tmp_path / 'one' / 'mc.jsonl').read_bytes()
    assert one == (tmp_path / 'two' / 'mc.jsonl').read_bytes()
    assert len(one.splitlines()) == 4


def test_seed_from_environment(tmp_path, fast_config, monkeypatch):
    monkeypatch.setenv('RUIN_SEED', '7')
    assert main(['simulate', '--config', str(fast_config), '--paths', '300',
                 '--out', str(tmp_path / 'env')]) == 0
    monkeypatch.delenv('RUIN_SEED')
    assert main(['simulate', '--config', str(fast_config), '--paths', '300', '--seed', '7',
                 '--out', str(tmp_path / 'flag')]) == 0
    assert ((tmp_path / 'env' / 'mc.jsonl').read_bytes()
            == (tmp_path / 'flag' / 'mc.jsonl').read_bytes())


def test_simulate_empty_u_values(tmp_path):
    config = write_config(tmp_path, 'claims = { kind = "exponential", rate = 1.0 }\n' + FAST_MODEL + """
[simulation]
u_values = []
""")
    out = tmp_path / 'out'
    assert main(['simulate', '--config', str(config), '--out', str(out)]) == 0
    assert (out / 'mc.jsonl').read_text(encoding='utf-8') == ''


def test_simulate_single_path(tmp_path, fast_config):
    out = tmp_path / 'out'
    assert main(['simulate', '--config', str(fast_config), '--paths', '1', '--out', str(out)]) == 0
    for record in ResultStore(out).read_jsonl('mc.jsonl'):
        assert record['n_paths'] == 1
        assert record['lower'] in (0.0, 1.0)
        assert record['upper'] in (0.0, 1.0)


def test_verify_lambda_zero_passes(tmp_path, quiet_config):
    out = tmp_path / 'out'
    assert main(['verify', '--config', str(quiet_config), '--out', str(out)]) == 0
    result = ResultStore(out).read_json('verify.json')
    assert result['pass'] is True
    assert result['phi0_injected'] is False
    assert ResultStore(out).exists('mc.jsonl')


def test_verify_negative_control_fails(tmp_path, quiet_config):
    out = tmp_path / 'out'
    code = main(['verify', '--config', str(quiet_config), '--out', str(out), '--inject-phi0-error'])
    assert code == 1
    result = ResultStore(out).read_json('verify.json')
    assert result['pass'] is False
    assert result['phi0_injected'] is True
    assert not any(row['pass'] for row in result['mc_comparison'])


def test_verify_reruns_simulation_when_settings_differ(tmp_path, quiet_config):
    out = tmp_path / 'out'
    assert main(['simulate', '--config', str(quiet_config), '--out', str(out),
                 '--paths', '40', '--seed', '3']) == 0
    assert all(r['n_paths'] == 40 for r in ResultStore(out).read_jsonl('mc.jsonl'))

    assert main(['verify', '--config', str(quiet_config), '--out', str(out), '--seed', '5']) == 0
    records = ResultStore(out).read_jsonl('mc.jsonl')
    assert all(r['n_paths'] == 300 and r['seed'] == 5 for r in records)


def test_verify_reuses_matching_simulation(tmp_path, quiet_config):
    out = tmp_path / 'out'
    assert main(['simulate', '--config', str(quiet_config), '--out', str(out), '--seed', '5']) == 0
    mc_file = out / 'mc.jsonl'
    mc_file.write_text(mc_file.read_text(encoding='utf-8').replace('"n_paths"', '"n_paths" '),
                       encoding='utf-8')
    before = mc_file.read_bytes()
    assert main(['verify', '--config', str(quiet_config), '--out', str(out), '--seed', '5']) == 0
    assert mc_file.read_bytes() == before


def test_verify_atomic_claims_excludes_atom(tmp_path):
    config = write_config(tmp_path, 'claims = { kind = "deterministic", atom = 2.0 }\n' + FAST_MODEL + """
[solver]
u_max = 100.0
n = 16385

[simulation]
horizon = 200.0
n_paths = 2000
u_values = [0.5, 1.0, 2.0, 5.0]

[verify]
residual_tol = 1e-2
""")
    out = tmp_path / 'out'
    assert main(['verify', '--config', str(config), '--out', str(out)]) == 0
    result = ResultStore(out).read_json('verify.json')
    assert result['ide_residual']['atom_locations'] == [2.0]
    assert result['ide_residual']['excluded_count'] > 0


def test_verify_exponential_against_monte_carlo(tmp_path):
    config = write_config(tmp_path, 'claims = { kind = "exponential", rate = 1.0 }\n' + """
[model]
a = 0.1
r = 0.0
kappa = 1.0
sigma = 0.3
c = 1.5
lambda = 1.0

[solver]
n = 16385

[simulation]
horizon = 200.0
n_paths = 2000
u_values = [0.5, 1.0, 2.0, 5.0]

[verify]
residual_tol = 1e-2
""")
    out = tmp_path / 'out'
    assert main(['verify', '--config', str(config), '--out', str(out)]) == 0
    assert main(['verify', '--config', str(config), '--out', str(out), '--inject-phi0-error']) == 1


def test_no_subcommand_prints_help(capsys):
    assert main([]) == 2
    assert 'usage' in capsys.readouterr().out


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
