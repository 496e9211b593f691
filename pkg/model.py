"""
モデルパラメータ・請求額分布モジュール
市場・保険パラメータ、構造パラメータ (γ, α, μ)、請求額分布の裾・モーメント・サンプリング
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import special

from errors import AssumptionError, ConfigError, DomainError
from logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """
    市場・保険パラメータ

    Attributes:
        a: 危険資産のドリフト (1/時間)
        r: 無リスク金利 (1/時間)
        kappa: 危険資産への投資比率 (0, 1]
        sigma: ボラティリティ (1/√時間)
        c: 保険料率 (通貨/時間)
        lam: 請求到着強度 (1/時間)
    """
    a: float
    r: float
    kappa: float
    sigma: float
    c: float
    lam: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive (got {self.sigma})")
        if not self.c > 0:
            raise ConfigError(f"c must be positive (got {self.c})")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be non-negative (got {self.lam})")
        if not 0 < self.kappa <= 1:
            raise ConfigError(f"kappa must lie in (0, 1] (got {self.kappa})")
        if not self.r >= 0:
            raise ConfigError(f"r must be non-negative (got {self.r})")

    @property
    def eta(self) -> float:
        """資本全体の瞬間ドリフト (a−r)κ + r"""
        return (self.a - self.r) * self.kappa + self.r

    @property
    def diffusion(self) -> float:
        """資本全体のボラティリティ κσ"""
        return self.kappa * self.sigma


@dataclass(frozen=True)
class DerivedParams:
    """構造パラメータ (γ, α, μ)"""
    gamma: float
    alpha: float
    mu: float

    @property
    def lambda_over_c(self) -> float:
        """g(0) = λ/c = μ/α"""
        return self.mu / self.alpha


def derive_params(m: ModelParams) -> DerivedParams:
    """
    構造パラメータを計算

    γ > 1 はここでは検査しない（check_assumptions で別途検査）

    Args:
        m: モデルパラメータ

    Returns:
        DerivedParams(γ, α, μ)
    """
    denom = m.kappa ** 2 * m.sigma ** 2
    return DerivedParams(
        gamma=2.0 * m.eta / denom,
        alpha=2.0 * m.c / denom,
        mu=2.0 * m.lam / denom,
    )


# ---------------------------------------------------------------------------
# 請求額分布
# ---------------------------------------------------------------------------

class ClaimDistribution:
    """
    請求額分布の基底クラス

    サブクラスは tail / from_uniform / moment を実装する。
    全て不変で、乱数状態は引数で受け取る。
    """

    kind = 'abstract'

    def tail(self, x):
        """裾関数 F̄(x) = 1 − F(x)（右連続）"""
        raise NotImplementedError

    def cdf(self, x):
        """分布関数 F(x)"""
        return 1.0 - self.tail(x)

    def from_uniform(self, v):
        """逆裾変換 x = F̄⁻¹(v)、v ∈ (0, 1)"""
        raise NotImplementedError

    def moment(self, p: float) -> float:
        """p次モーメント E[ξ^p]（無限大の場合は math.inf）"""
        raise NotImplementedError

    def max_moment_order(self) -> float:
        """有限なモーメントの次数の上限（その次数自体は含まない場合がある）"""
        return math.inf

    def atoms(self) -> List[float]:
        """分布の原子（F̄ の不連続点）"""
        return []

    @property
    def sample_based(self) -> bool:
        """モーメントが標本ベース（裾は検証不能）かどうか"""
        return False

    def mean(self) -> float:
        return self.moment(1.0)

    def median(self) -> float:
        return float(self.from_uniform(0.5))

    def typical_size(self) -> float:
        """グリッド既定値用の代表的な請求額（平均、無限なら中央値）"""
        m = self.mean()
        return m if math.isfinite(m) else self.median()

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """逆CDF法によるサンプリング"""
        v = rng.random(size)
        # v = 0 は逆裾変換で発散するため (0, 1] へ写す
        return self.from_uniform(1.0 - v)

    def to_spec(self) -> Dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ClaimDistribution):
    """指数分布 F̄(x) = e^{−rate·x}"""
    rate: float
    kind = 'exponential'

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigError(f"exponential rate must be positive (got {self.rate})")

    def tail(self, x):
        return np.exp(-self.rate * np.asarray(x, dtype=float))

    def from_uniform(self, v):
        return -np.log(v) / self.rate

    def moment(self, p: float) -> float:
        return float(special.gamma(p + 1.0) / self.rate ** p)

    def to_spec(self) -> Dict:
        return {'kind': self.kind, 'rate': self.rate}


@dataclass(frozen=True)
class Pareto(ClaimDistribution):
    """Lomax形のパレート分布 F̄(x) = (1 + x/scale)^{−index}"""
    index: float
    scale: float
    kind = 'pareto'

    def __post_init__(self):
        if not (self.index > 0 and self.scale > 0):
            raise ConfigError(
                f"pareto index and scale must be positive (got {self.index}, {self.scale})")

    def tail(self, x):
        return (1.0 + np.asarray(x, dtype=float) / self.scale) ** (-self.index)

    def from_uniform(self, v):
        return self.scale * (np.asarray(v, dtype=float) ** (-1.0 / self.index) - 1.0)

    def moment(self, p: float) -> float:
        if p >= self.index:
            return math.inf
        # scale^p Γ(1+p) Γ(index−p) / Γ(index)
        log_m = (p * math.log(self.scale) + special.gammaln(1.0 + p)
                 + special.gammaln(self.index - p) - special.gammaln(self.index))
        return float(math.exp(log_m))

    def max_moment_order(self) -> float:
        return self.index

    def to_spec(self) -> Dict:
        return {'kind': self.kind, 'index': self.index, 'scale': self.scale}


@dataclass(frozen=True)
class Lognormal(ClaimDistribution):
    """対数正規分布 ln ξ ~ N(location, shape²)"""
    location: float
    shape: float
    kind = 'lognormal'

    def __post_init__(self):
        if not self.shape > 0:
            raise ConfigError(f"lognormal shape must be positive (got {self.shape})")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore'):
            z = (np.log(x) - self.location) / (self.shape * math.sqrt(2.0))
        return 0.5 * special.erfc(z)

    def from_uniform(self, v):
        return np.exp(self.location - self.shape * special.ndtri(v))

    def moment(self, p: float) -> float:
        return float(math.exp(p * self.location + 0.5 * p * p * self.shape ** 2))

    def to_spec(self) -> Dict:
        return {'kind': self.kind, 'location': self.location, 'shape': self.shape}


@dataclass(frozen=True)
class Deterministic(ClaimDistribution):
    """退化分布（常に atom の請求額）"""
    atom: float
    kind = 'deterministic'

    def __post_init__(self):
        if not self.atom > 0:
            raise ConfigError(f"deterministic atom must be positive (got {self.atom})")

    def tail(self, x):
        return np.where(np.asarray(x, dtype=float) < self.atom, 1.0, 0.0)

    def from_uniform(self, v):
        return np.full(np.shape(v), self.atom) if np.ndim(v) else self.atom

    def moment(self, p: float) -> float:
        return float(self.atom ** p)

    def atoms(self) -> List[float]:
        return [self.atom]

    def to_spec(self) -> Dict:
        return {'kind': self.kind, 'atom': self.atom}


def _claim_number(name: str, value) -> float:
    """claims.<name> の数値を検査して float にする"""
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise ConfigError(f"invalid value for 'claims.{name}': {value!r}")
    return float(value)


@dataclass(frozen=True)
class Empirical(ClaimDistribution):
    """経験分布（標本の各点に等確率の原子）"""
    values: Tuple[float, ...] = field(default=())
    kind = 'empirical'

    def __post_init__(self):
        if len(self.values) == 0:
            raise ConfigError("empirical distribution needs at least one value")
        ordered = tuple(sorted(_claim_number('values', v) for v in self.values))
        if ordered[0] <= 0:
            raise ConfigError("empirical claim sizes must be strictly positive")
        object.__setattr__(self, 'values', ordered)

    @property
    def _array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def tail(self, x):
        arr = self._array
        counts = np.searchsorted(arr, np.asarray(x, dtype=float), side='right')
        return 1.0 - counts / arr.size

    def from_uniform(self, v):
        arr = self._array
        n = arr.size
        # F⁻¹(1−v): F(x) ≥ 1−v を満たす最小の標本
        idx = np.ceil(n * (1.0 - np.asarray(v, dtype=float))).astype(int) - 1
        return arr[np.clip(idx, 0, n - 1)]

    def moment(self, p: float) -> float:
        return float(np.mean(self._array ** p))

    def atoms(self) -> List[float]:
        return sorted(set(self.values))

    @property
    def sample_based(self) -> bool:
        return True

    def to_spec(self) -> Dict:
        return {'kind': self.kind, 'values': list(self.values)}


_FAMILIES = {
    'exponential': (Exponential, ('rate',)),
    'pareto': (Pareto, ('index', 'scale')),
    'lognormal': (Lognormal, ('location', 'shape')),
    'deterministic': (Deterministic, ('atom',)),
}


def claim_distribution_from_spec(spec: Dict) -> ClaimDistribution:
    """
    設定ファイルの claims グループから分布を生成

    Args:
        spec: {'kind': 'pareto', 'index': 2.5, 'scale': 1.0} 形式の辞書
              empirical は 'values' にリストを持つ

    Returns:
        ClaimDistribution

    Raises:
        ConfigError: 不明な種類・パラメータ不足
    """
    kind = spec.get('kind')
    if kind == 'empirical':
        if 'values' not in spec:
            raise ConfigError("missing field 'claims.values'")
        values = spec['values']
        if not isinstance(values, (list, tuple)):
            raise ConfigError(f"invalid value for 'claims.values': {values!r}")
        return Empirical(tuple(values))
    if kind not in _FAMILIES:
        raise ConfigError(f"unknown claim distribution kind '{kind}'")

    cls, names = _FAMILIES[kind]
    kwargs = {}
    for name in names:
        if name not in spec:
            raise ConfigError(f"missing field 'claims.{name}'")
        kwargs[name] = _claim_number(name, spec[name])
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# モジュール関数
# ---------------------------------------------------------------------------

def tail(d: ClaimDistribution, x):
    """
    裾関数 F̄(x)

    Raises:
        DomainError: x < 0
    """
    if np.any(np.asarray(x) < 0):
        raise DomainError(f"tail is defined for x >= 0 only (got {x})")
    value = d.tail(x)
    return float(value) if np.ndim(value) == 0 else value


def moment(d: ClaimDistribution, p: float) -> float:
    """p次モーメント（無限大は math.inf）"""
    if not p > 0:
        raise DomainError(f"moment order must be positive (got {p})")
    return d.moment(p)


def sample(d: ClaimDistribution, rng: np.random.Generator, size: Optional[int] = None):
    """逆CDF法によるサンプリング（同じシードなら同じ値）"""
    return d.sample(rng, size)


@dataclass
class AssumptionReport:
    """仮定 (A1)–(A3) の検査結果"""
    a1_ok: bool
    a2_ok: bool
    a2_order: float
    a3_ok: bool
    gamma: float
    epsilon: Optional[float]
    moment_gamma_minus_1: Optional[float]
    sample_based: bool
    failures: List[str] = field(default_factory=list)

    @property
    def moment_gamma_minus_1_finite(self) -> Optional[bool]:
        if self.moment_gamma_minus_1 is None:
            return None
        return math.isfinite(self.moment_gamma_minus_1)

    @property
    def asymptotics_branch(self) -> Optional[str]:
        finite = self.moment_gamma_minus_1_finite
        if finite is None:
            return None
        return 'power_law' if finite else 'divergent'

    def require_solvable(self):
        """
        ソルバーが実行可能か確認

        Raises:
            AssumptionError: A1 または A3 が不成立
        """
        if not self.a3_ok:
            raise AssumptionError(
                f"gamma must exceed 1 (gamma = {self.gamma:.6g}); "
                f"otherwise the ruin probability is identically 1",
                code='gamma')
        if not self.a1_ok:
            raise AssumptionError("claim distribution must satisfy F(0) = 0", code='atom_at_zero')

    def to_dict(self) -> Dict:
        return {
            'A1': self.a1_ok,
            'A2': self.a2_ok,
            'A2_order': self.a2_order,
            'A3': self.a3_ok,
            'gamma': self.gamma,
            'epsilon': self.epsilon,
            'moment_gamma_minus_1': self.moment_gamma_minus_1,
            'asymptotics_branch': self.asymptotics_branch,
            'sample_based': self.sample_based,
            'failures': list(self.failures),
        }


def check_assumptions(m: ModelParams, d: ClaimDistribution) -> AssumptionReport:
    """
    仮定 (A1)–(A3) を検査

    失敗しても例外は送出せず、failures に記述を残す

    Args:
        m: モデルパラメータ
        d: 請求額分布

    Returns:
        AssumptionReport
    """
    dp = derive_params(m)
    failures = []

    a1_ok = bool(d.cdf(0.0) == 0.0)
    if not a1_ok:
        failures.append("A1: F(0) must be 0 (claim distribution has an atom at zero)")

    a2_order = d.max_moment_order()
    a2_ok = a2_order > 0
    if not a2_ok:
        failures.append("A2: no finite moment of positive order")

    a3_ok = dp.gamma > 1.0
    if not a3_ok:
        failures.append(f"A3: gamma must exceed 1 (gamma = {dp.gamma:.6g}), otherwise Psi = 1")

    epsilon = None
    moment_gm1 = None
    if a3_ok:
        # ε ∈ (0,1) かつ γ−1−ε > 0 となるよう縮める
        epsilon = min(0.99, 0.5 * (dp.gamma - 1.0), 0.5 * a2_order if math.isfinite(a2_order) else 0.99)
        moment_gm1 = d.moment(dp.gamma - 1.0)

    report = AssumptionReport(
        a1_ok=a1_ok,
        a2_ok=a2_ok,
        a2_order=a2_order,
        a3_ok=a3_ok,
        gamma=dp.gamma,
        epsilon=epsilon,
        moment_gamma_minus_1=moment_gm1,
        sample_based=d.sample_based,
        failures=failures,
    )
    if failures:
        logger.warning(f"仮定の検査に失敗: {'; '.join(failures)}")
    return report
