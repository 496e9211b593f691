"""
設定ファイル管理モジュール
TOML形式の実行設定（モデル・請求額分布・ソルバー・シミュレーション・出力）を読み込む
"""
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from errors import ConfigError
from logger import get_logger
from mc_oracle import SimConfig
from model import ClaimDistribution, ModelParams, claim_distribution_from_spec
from volterra_solver import SolverConfig

logger = get_logger(__name__)

SEED_ENV = 'RUIN_SEED'

MODEL_FIELDS = ('a', 'r', 'kappa', 'sigma', 'c', 'lambda')
SOLVER_FIELDS = {
    'u_max': float, 'n': int, 'u0_init': float, 'picard_tol': float,
    'picard_max_iter': int, 'contraction_target': float, 'max_halvings': int,
}
SIMULATION_FIELDS = {
    'horizon': float, 'dt_max': float, 'n_paths': int, 'seed': int,
    'survival_barrier': float, 'u_values': tuple, 'workers': int,
}
OUTPUT_FORMATS = ('csv', 'json', 'svg')


@dataclass(frozen=True)
class RunConfig:
    """
    実行設定

    Attributes:
        model: モデルパラメータ（必須）
        claims: 請求額分布（必須）
        solver: ソルバー設定
        simulation: シミュレーション設定（seed を含む）
        residual_tol: 検証の IDE 残差の許容値
        output_dir: 出力ディレクトリ
        formats: 出力形式
    """
    model: ModelParams
    claims: ClaimDistribution
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimConfig = field(default_factory=SimConfig)
    residual_tol: float = 1e-3
    output_dir: Path = Path('out')
    formats: Tuple[str, ...] = OUTPUT_FORMATS

    @property
    def seed(self) -> int:
        return self.simulation.seed

    def with_overrides(self, out: Optional[str] = None, seed: Optional[int] = None,
                       paths: Optional[int] = None, grid: Optional[int] = None,
                       umax: Optional[float] = None, workers: Optional[int] = None) -> 'RunConfig':
        """
        CLIフラグと環境変数 RUIN_SEED で上書きした設定を返す

        優先順位: フラグ > RUIN_SEED（seed のみ） > 設定ファイル > 既定値
        """
        simulation = self.simulation
        solver = self.solver
        env_seed = os.environ.get(SEED_ENV)
        if seed is None and env_seed:
            try:
                seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer (got '{env_seed}')")
        if seed is not None:
            simulation = replace(simulation, seed=int(seed))
        if paths is not None:
            simulation = replace(simulation, n_paths=int(paths))
        if workers is not None:
            simulation = replace(simulation, workers=int(workers))
        if grid is not None:
            solver = replace(solver, n=int(grid))
        if umax is not None:
            solver = replace(solver, u_max=float(umax))
        solver.validate()
        simulation.validate()

        output_dir = Path(out) if out is not None else self.output_dir
        return replace(self, solver=solver, simulation=simulation, output_dir=output_dir)


def _section(data: Dict, name: str) -> Dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be a table")
    return value


def _typed(section: str, key: str, value: Any, kind: type) -> Any:
    try:
        if kind is tuple:
            return tuple(float(v) for v in value)
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for '{section}.{key}': {value!r}")


def _warn_unknown(section: str, values: Dict, known):
    for key in values:
        if key not in known:
            logger.warning(f"未知の設定項目を無視: {section + '.' if section else ''}{key}")


class ConfigManager:
    """
    実行設定ファイル（TOML）を管理するクラス

    Args:
        config_path: 設定ファイルのパス
    """

    def __init__(self, config_path: Path):
        self.config_path = Path(config_path)

    def read_raw(self) -> Dict:
        """
        設定ファイルを辞書として読み込む

        Raises:
            ConfigError: ファイルが無い・構文エラー
        """
        if not self.config_path.exists():
            raise ConfigError(f"config file not found: {self.config_path}", code='config_missing')
        try:
            with open(self.config_path, 'rb') as f:
                return tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {self.config_path}: {e}", code='config_syntax')

    def load(self) -> RunConfig:
        """
        設定ファイルを読み込んで RunConfig を作る

        Returns:
            RunConfig

        Raises:
            ConfigError: 必須項目の欠落・不正な値
        """
        data = self.read_raw()
        _warn_unknown('', data, ('model', 'claims', 'solver', 'simulation', 'verify', 'output'))

        model = self._model(_section(data, 'model'))
        claims = self._claims(data)
        solver = self._solver(_section(data, 'solver'))
        simulation = self._simulation(_section(data, 'simulation'))

        verify = _section(data, 'verify')
        _warn_unknown('verify', verify, ('residual_tol',))
        residual_tol = _typed('verify', 'residual_tol', verify.get('residual_tol', 1e-3), float)
        if not residual_tol > 0:
            raise ConfigError("verify.residual_tol must be positive")

        output = _section(data, 'output')
        _warn_unknown('output', output, ('directory', 'formats'))
        output_dir = Path(output.get('directory', 'out'))
        formats = tuple(output.get('formats', OUTPUT_FORMATS))
        unknown = [f for f in formats if f not in OUTPUT_FORMATS]
        if unknown:
            raise ConfigError(f"unknown output format(s): {', '.join(unknown)}")

        logger.debug(f"設定を読み込みました: {self.config_path}")
        return RunConfig(model=model, claims=claims, solver=solver, simulation=simulation,
                         residual_tol=residual_tol, output_dir=output_dir, formats=formats)

    def _model(self, section: Dict) -> ModelParams:
        _warn_unknown('model', section, MODEL_FIELDS)
        values = {}
        for key in MODEL_FIELDS:
            if key not in section:
                raise ConfigError(f"missing field 'model.{key}'", code='missing_field')
            values[key] = _typed('model', key, section[key], float)
        return ModelParams(a=values['a'], r=values['r'], kappa=values['kappa'],
                           sigma=values['sigma'], c=values['c'], lam=values['lambda'])

    def _claims(self, data: Dict) -> ClaimDistribution:
        if 'claims' not in data:
            raise ConfigError("missing field 'claims'", code='missing_field')
        spec = dict(_section(data, 'claims'))
        if 'kind' not in spec:
            raise ConfigError("missing field 'claims.kind'", code='missing_field')
        if spec['kind'] == 'empirical' and 'path' in spec and 'values' not in spec:
            spec['values'] = self._read_claim_values(spec.pop('path'))
        return claim_distribution_from_spec(spec)

    def _read_claim_values(self, path: str):
        """1行に1つの値を持つファイル（設定ファイルからの相対パス）"""
        claim_path = Path(path)
        if not claim_path.is_absolute():
            claim_path = self.config_path.parent / claim_path
        try:
            text = claim_path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"cannot read claims.path '{claim_path}': {e}")
        values = []
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ConfigError(f"{claim_path}:{number}: not a number: {line!r}")
        return values

    def _solver(self, section: Dict) -> SolverConfig:
        _warn_unknown('solver', section, SOLVER_FIELDS)
        kwargs = {k: _typed('solver', k, v, SOLVER_FIELDS[k])
                  for k, v in section.items() if k in SOLVER_FIELDS}
        cfg = SolverConfig(**kwargs)
        cfg.validate()
        return cfg

    def _simulation(self, section: Dict) -> SimConfig:
        _warn_unknown('simulation', section, SIMULATION_FIELDS)
        kwargs = {k: _typed('simulation', k, v, SIMULATION_FIELDS[k])
                  for k, v in section.items() if k in SIMULATION_FIELDS}
        cfg = SimConfig(**kwargs)
        cfg.validate()
        return cfg


def load_run_config(config_path, **overrides) -> RunConfig:
    """設定ファイルを読み込み、上書きを適用する便利関数"""
    return ConfigManager(Path(config_path)).load().with_overrides(**overrides)
