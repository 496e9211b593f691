"""
漸近挙動の解析モジュール
極限 L = lim u^γ g(u)、定数 C∞ = L/(γ−1) と裾の領域（べき乗則 / 発散）の判定
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from errors import DivergentLimitError, SolverError
from logger import get_logger
from model import ClaimDistribution, DerivedParams, ModelParams, derive_params
from model import moment as claim_moment
from survival import SurvivalCurve, fit_continuation, fit_power_tail
from volterra_solver import SolutionGrid

logger = get_logger(__name__)

POWER_LAW = 'power_law'
DIVERGENT = 'divergent'

# 1オクターブあたりの増加率がこれを超えたら発散とみなす
DIVERGENCE_GROWTH = 1.10
PLATEAU_OCTAVES = 4
SUBEXP_POINTS = 8


@dataclass
class RegimeDiagnostics:
    """モーメント検査による領域判定"""
    regime: str
    moment_gamma_minus_1: float
    sample_based: bool
    subexp_ratio: List[List[float]] = field(default_factory=list)


@dataclass
class LimitEstimate:
    """
    L の二通りの推定

    Attributes:
        value: 報告値（推定 (i)）
        tail_continuation: 推定 (i) H(u_max) + 被積分関数のべき乗則延長
        plateau: 推定 (ii) u^γ g の最後の1桁での平坦部（1/u の二次補正つき）
        uncertainty: |(i) − (ii)| / (i)
        growth_per_octave: 最後の2オクターブでの u^γ g の増加率
    """
    value: float
    tail_continuation: float
    plateau: float
    uncertainty: float
    growth_per_octave: List[float] = field(default_factory=list)


@dataclass
class AsymptoticsReport:
    """漸近解析の結果（JSON レポート）"""
    regime: str
    moment_gamma_minus_1: float
    L_estimate: Optional[float]
    C_infinity: Optional[float]
    plateau_series: List[List[float]]
    subexp_ratio_series: List[List[float]]
    gamma: float
    divergent_flag: bool
    L_cross_check: Optional[LimitEstimate] = None
    psi_slope: Optional[float] = None
    plateau_growth: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        result = {
            'regime': self.regime,
            'moment_gamma_minus_1': self.moment_gamma_minus_1,
            'L': self.L_estimate,
            'C_infinity': self.C_infinity,
            'plateau': self.plateau_series,
            'subexp_ratio': self.subexp_ratio_series,
            'gamma': self.gamma,
            'divergent': self.divergent_flag,
            'psi_slope': self.psi_slope,
            'plateau_growth_per_octave': self.plateau_growth,
        }
        if self.L_cross_check is not None:
            result['L_estimates'] = {
                'tail_continuation': self.L_cross_check.tail_continuation,
                'plateau': self.L_cross_check.plateau,
                'uncertainty': self.L_cross_check.uncertainty,
            }
            result['growth_per_octave'] = self.L_cross_check.growth_per_octave
        return result


def geometric_points(u_max: float, count: int) -> np.ndarray:
    """u_max·2^{−j}（j = count−1, …, 0）の昇順"""
    return u_max * 2.0 ** -np.arange(count - 1, -1, -1, dtype=float)


def octave_growth(u: np.ndarray, values: np.ndarray, u_max: float, octaves: int = 2) -> List[float]:
    """最後の octaves 個のオクターブでの増加率 V(2x)/V(x)"""
    points = geometric_points(u_max, octaves + 1)
    sampled = np.interp(points, u, values)
    growth = []
    for lo, hi in zip(sampled[:-1], sampled[1:]):
        growth.append(float(hi / lo) if lo > 0 else math.inf)
    return growth


def subexp_ratio_series(curve: SurvivalCurve, d: ClaimDistribution,
                        count: int = SUBEXP_POINTS) -> List[List[float]]:
    """幾何的な点での Ψ(u)/F̄(u)（F̄(u) = 0 の点は除く）"""
    series = []
    for u in geometric_points(curve.u_max, count):
        tail_value = float(d.tail(u))
        if tail_value > 0:
            series.append([float(u), float(curve.psi_at(u)) / tail_value])
    return series


def classify_regime(m: ModelParams, d: ClaimDistribution, dp: Optional[DerivedParams] = None,
                    curve: Optional[SurvivalCurve] = None) -> RegimeDiagnostics:
    """
    E[ξ^{γ−1}] の有限性で領域を判定

    発散領域で curve が与えられれば Ψ/F̄ の診断系列も作る

    Args:
        m: モデルパラメータ
        d: 請求額分布
        dp: 構造パラメータ（省略時は m から計算）
        curve: 生存確率曲線（省略可）

    Returns:
        RegimeDiagnostics
    """
    dp = dp or derive_params(m)
    order = dp.gamma - 1.0
    value = claim_moment(d, order) if order > 0 else 1.0
    regime = POWER_LAW if math.isfinite(value) else DIVERGENT
    diagnostics = RegimeDiagnostics(regime=regime, moment_gamma_minus_1=value,
                                    sample_based=d.sample_based)
    if regime == DIVERGENT and curve is not None:
        diagnostics.subexp_ratio = subexp_ratio_series(curve, d)
    logger.debug(f"領域判定: {regime} (E[xi^{order:.4g}] = {value:.6g})")
    return diagnostics


def _scaled_profile(grid: SolutionGrid, curve: SurvivalCurve) -> np.ndarray:
    """φ₀·u^γ g₁(u)"""
    dp = grid.dp
    return curve.phi0 * grid.nodes ** dp.gamma * grid.g1 / grid.scale


def limit_L(grid: SolutionGrid, curve: SurvivalCurve) -> LimitEstimate:
    """
    L = lim u^γ g(u) を二通りに推定して突き合わせる

    (i) H(u_max) に、H の増分 μw(F̄ + Bg₁) のべき乗則延長で [u_max, ∞) の寄与を足す
    (ii) φ₀ u^γ g₁(u) を最後の1桁で L + b/u + c/u² にフィットした切片

    Args:
        grid: ソルバーの出力
        curve: 生存確率曲線

    Returns:
        LimitEstimate（value は推定 (i)）

    Raises:
        DivergentLimitError: u^γ g が最後の2オクターブで 10% 超/オクターブで増加
    """
    if grid.is_trivial:
        return LimitEstimate(value=0.0, tail_continuation=0.0, plateau=0.0, uncertainty=0.0)

    dp = grid.dp
    u = grid.nodes
    u_max = grid.u_max
    profile = _scaled_profile(grid, curve)

    growth = octave_growth(u, profile, u_max)
    if all(r > DIVERGENCE_GROWTH for r in growth):
        logger.warning(f"u^gamma g が発散: オクターブ増加率 {growth}")
        raise DivergentLimitError(
            f"u^gamma g(u) grows by more than {DIVERGENCE_GROWTH - 1:.0%} per octave "
            f"over the last two octaves ({', '.join(f'{r:.3f}' for r in growth)})")

    # (i) 単調極限 lim H(u)：H の増分のべき乗則延長
    continuation = curve.continuation
    if continuation is None:
        continuation = fit_continuation(grid)
    if not continuation.bounded:
        raise DivergentLimitError(
            f"H increments decay like u^-{continuation.exponent:.4g}, too slowly for a finite limit "
            f"(gamma = {dp.gamma:.4g})")
    estimate_i = curve.phi0 * continuation.limit

    # (ii) 平坦部を 1/u の二次式で外挿
    mask = u >= u_max / 10.0
    estimate_ii = np.polyfit(1.0 / u[mask], profile[mask], 2)[-1]
    estimate_ii = float(estimate_ii)

    uncertainty = abs(estimate_i - estimate_ii) / estimate_i if estimate_i > 0 else math.inf
    logger.info(f"L の推定: (i)={estimate_i:.6g}, (ii)={estimate_ii:.6g}, 相対差={uncertainty:.3g}")
    return LimitEstimate(value=float(estimate_i), tail_continuation=float(estimate_i),
                         plateau=estimate_ii, uncertainty=float(uncertainty),
                         growth_per_octave=growth)


def c_infinity(L: float, dp: DerivedParams, regime: str = POWER_LAW) -> float:
    """
    C∞ = L/(γ−1)

    Raises:
        DivergentLimitError: 発散領域
    """
    if regime != POWER_LAW:
        raise DivergentLimitError("C_infinity is undefined in the divergent regime")
    return L / (dp.gamma - 1.0)


def plateau_series(curve: SurvivalCurve, gamma: float,
                   octaves: int = PLATEAU_OCTAVES) -> List[List[float]]:
    """u_k = u_max·2^{−j}（j = octaves−1..0）での u^{γ−1}Ψ(u)"""
    points = geometric_points(curve.u_max, octaves)
    psi = curve.psi_at(points)
    return [[float(u), float(u ** (gamma - 1.0) * p)] for u, p in zip(points, psi)]


def psi_slope(curve: SurvivalCurve) -> Optional[float]:
    """最後の1桁での log Ψ の log u に対する傾き"""
    try:
        exponent, _, _ = fit_power_tail(curve.nodes, curve.psi, curve.u_max / 10.0)
    except SolverError:
        return None
    return -exponent


def analyze(m: ModelParams, d: ClaimDistribution, grid: SolutionGrid,
            curve: SurvivalCurve) -> AsymptoticsReport:
    """
    漸近解析をまとめて実行

    Args:
        m: モデルパラメータ
        d: 請求額分布
        grid: ソルバーの出力
        curve: 生存確率曲線

    Returns:
        AsymptoticsReport
    """
    dp = grid.dp
    diagnostics = classify_regime(m, d, dp, curve)
    series = plateau_series(curve, dp.gamma)
    values = [v for _, v in series]
    plateau_growth = [float(b / a) if a > 0 else 0.0 for a, b in zip(values[:-1], values[1:])]

    L_value: Optional[float] = None
    C_value: Optional[float] = None
    estimate: Optional[LimitEstimate] = None
    divergent_flag = False
    try:
        estimate = limit_L(grid, curve)
        L_value = estimate.value
    except DivergentLimitError as e:
        divergent_flag = True
        logger.warning(f"極限 L を確定できません: {e}")

    if diagnostics.regime == POWER_LAW and L_value is not None:
        C_value = c_infinity(L_value, dp, diagnostics.regime)

    slope = None if grid.is_trivial else psi_slope(curve)
    report = AsymptoticsReport(
        regime=diagnostics.regime,
        moment_gamma_minus_1=diagnostics.moment_gamma_minus_1,
        L_estimate=L_value if diagnostics.regime == POWER_LAW else None,
        C_infinity=C_value,
        plateau_series=series,
        subexp_ratio_series=diagnostics.subexp_ratio if diagnostics.regime == DIVERGENT else [],
        gamma=dp.gamma,
        divergent_flag=divergent_flag or diagnostics.regime == DIVERGENT,
        L_cross_check=estimate,
        psi_slope=slope,
        plateau_growth=plateau_growth,
    )
    logger.info(f"漸近解析: regime={report.regime}, L={report.L_estimate}, C_inf={report.C_infinity}")
    return report

