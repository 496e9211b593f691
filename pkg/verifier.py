"""
検証モジュール
計算した解を元の積分微分方程式に代入した残差、滑らかさ、格子収束、モンテカルロとの比較
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from logger import get_logger
from model import AssumptionReport, ClaimDistribution, ModelParams
from mc_oracle import McEstimate
from quadrature import LOG_TINY, ProductTrapezoid, WeightEvaluator
from survival import SurvivalCurve, fit_power_tail, tail_profile
from volterra_solver import SolutionGrid, SolverConfig, convolve_all, solve_g1

logger = get_logger(__name__)

# 原子の前後で除外する幅（中心差分のステンシル幅）
ATOM_WINDOW_STEPS = 2
MC_WIDENING = 3.0


def _near_atoms(nodes: np.ndarray, atoms: Sequence[float], width: float) -> np.ndarray:
    mask = np.zeros(nodes.shape, dtype=bool)
    for a in atoms:
        mask |= np.abs(nodes - a) <= width
    return mask


@dataclass
class ResidualReport:
    """
    積分微分方程式の残差

    Attributes:
        nodes: 評価した内部ノード
        residual: 正規化残差（除外ノードは NaN）
        max_norm: 除外ノードを除いた最大ノルム
        atom_locations: 除外した原子の位置
        excluded_count: 除外したノード数
        excluded_max: 除外ノードでの最大残差（参考値）
    """
    nodes: np.ndarray
    residual: np.ndarray
    max_norm: float
    atom_locations: List[float] = field(default_factory=list)
    excluded_count: int = 0
    excluded_max: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'max_norm': self.max_norm,
            'atom_locations': self.atom_locations,
            'excluded_count': self.excluded_count,
            'excluded_max': self.excluded_max,
        }


def ide_residual(grid: SolutionGrid, curve: SurvivalCurve, m: ModelParams,
                 d: ClaimDistribution) -> ResidualReport:
    """
    u²g′ + (γu+α)g − μΦ(0+)F̄ − μBg を内部ノードで評価

    g′ は中心差分、残差は (γu+α)|g| + μΦ(0+) で正規化する。
    F̄ の原子から 2h 以内のノードは除外して別に報告する。

    Args:
        grid: ソルバーの出力
        curve: 生存確率曲線
        m: モデルパラメータ（残差はスケール不変な (γ, α, μ) で評価する）
        d: 請求額分布

    Returns:
        ResidualReport
    """
    dp = grid.dp
    h = grid.h
    factor = curve.phi0 / grid.scale
    g = factor * grid.g1
    Bg = factor * grid.Bg
    u = grid.nodes[1:-1]

    dg = (g[2:] - g[:-2]) / (2.0 * h)
    gi = g[1:-1]
    raw = (u ** 2 * dg + (dp.gamma * u + dp.alpha) * gi
           - dp.mu * curve.phi0 * grid.tail[1:-1] - dp.mu * Bg[1:-1])
    denom = (dp.gamma * u + dp.alpha) * np.abs(gi) + dp.mu * curve.phi0
    residual = np.abs(raw) / np.where(denom > 0, denom, 1.0)

    atoms = [float(a) for a in d.atoms() if a <= grid.u_max]
    excluded = _near_atoms(u, atoms, ATOM_WINDOW_STEPS * h)
    kept = residual[~excluded]
    max_norm = float(kept.max()) if kept.size else 0.0
    excluded_max = float(residual[excluded].max()) if excluded.any() else None

    report = ResidualReport(
        nodes=u,
        residual=np.where(excluded, np.nan, residual),
        max_norm=max_norm,
        atom_locations=atoms,
        excluded_count=int(excluded.sum()),
        excluded_max=excluded_max,
    )
    logger.info(f"IDE残差: max={max_norm:.3e}, 除外ノード={report.excluded_count}")
    return report


@dataclass
class FixedPointReport:
    """h/2 の演算子で再代入した g₁ と元の g₁ の差"""
    max_error: float
    normalized_error: float
    nodes_checked: int

    def to_dict(self) -> Dict:
        return {
            'max_error': self.max_error,
            'normalized_error': self.normalized_error,
            'nodes_checked': self.nodes_checked,
        }


def fixed_point_residual(grid: SolutionGrid, d: ClaimDistribution) -> FixedPointReport:
    """
    g₁ をボルテラ方程式 g = μ E⁻¹ ∫₀^u w (qF̄ + Bg) に再代入する

    右辺は半分の幅のグリッド上で評価する（3次スプラインで g₁ を補間）。
    同じ離散化で評価すると丸め誤差しか残らないため。
    E が正規化数の範囲にあるノードだけを比較する。

    Args:
        grid: ソルバーの出力
        d: 請求額分布

    Returns:
        FixedPointReport
    """
    dp = grid.dp
    q = grid.scale
    if grid.is_trivial:
        return FixedPointReport(max_error=0.0, normalized_error=0.0, nodes_checked=grid.n)

    fine_n = 2 * grid.n - 1
    fine_h = grid.h / 2.0
    rule = ProductTrapezoid(WeightEvaluator(dp.gamma, dp.alpha), fine_h, fine_n)
    fine_nodes = rule.nodes
    g_fine = CubicSpline(grid.nodes, grid.g1)(fine_nodes)
    tail_fine = np.asarray(d.tail(fine_nodes), dtype=float)

    f = q * tail_fine + convolve_all(g_fine, tail_fine, fine_h)
    accumulated = rule.cumulative(f)[::2]

    log_E = rule.log_E[::2]
    normal = log_E >= LOG_TINY
    normal[0] = False
    predicted = dp.mu * accumulated[normal] / np.exp(log_E[normal])
    error = np.abs(predicted - grid.g1[normal])

    max_error = float(error.max()) if error.size else 0.0
    scale = float(np.max(np.abs(grid.g1)))
    report = FixedPointReport(max_error=max_error,
                              normalized_error=max_error / scale if scale > 0 else 0.0,
                              nodes_checked=int(normal.sum()))
    logger.info(f"不動点残差: {report.normalized_error:.3e}（{report.nodes_checked} ノード）")
    return report


@dataclass
class SmoothnessReport:
    """
    離散 g′ の跳びの診断

    Attributes:
        max_jump: 隣接区間の差分商の差の最大値（局所スケール g/max(u, h) で割った値）
        max_location: その位置
        max_jump_away_from_atoms: 原子から 2h 以上離れた範囲での最大値
        atom_locations: 原子の位置
        localized_at_atom: 最大の跳びが原子から 2h 以内にあるか
    """
    max_jump: float
    max_location: Optional[float]
    max_jump_away_from_atoms: float
    atom_locations: List[float] = field(default_factory=list)
    localized_at_atom: Optional[bool] = None

    def to_dict(self) -> Dict:
        return {
            'max_jump': self.max_jump,
            'max_location': self.max_location,
            'max_jump_away_from_atoms': self.max_jump_away_from_atoms,
            'atom_locations': self.atom_locations,
            'localized_at_atom': self.localized_at_atom,
        }


def smoothness_check(grid: SolutionGrid, d: ClaimDistribution) -> SmoothnessReport:
    """
    g′ の連続性を調べる

    連続な F では跳びは h に比例して消え、原子を持つ F では原子の位置に局在する

    Args:
        grid: ソルバーの出力
        d: 請求額分布

    Returns:
        SmoothnessReport
    """
    h = grid.h
    g = grid.g1
    slopes = np.diff(g) / h
    jumps = np.abs(np.diff(slopes))
    u = grid.nodes[1:-1]
    scale = np.abs(g[1:-1]) / np.maximum(u, h)
    relative = np.where(scale > 0, jumps / np.where(scale > 0, scale, 1.0), 0.0)

    atoms = [float(a) for a in d.atoms() if a <= grid.u_max]
    near = _near_atoms(u, atoms, ATOM_WINDOW_STEPS * h)

    if relative.size == 0 or not np.any(relative > 0):
        return SmoothnessReport(max_jump=0.0, max_location=None, max_jump_away_from_atoms=0.0,
                                atom_locations=atoms, localized_at_atom=None if not atoms else False)

    index = int(np.argmax(relative))
    away = relative[~near]
    report = SmoothnessReport(
        max_jump=float(relative[index]),
        max_location=float(u[index]),
        max_jump_away_from_atoms=float(away.max()) if away.size else 0.0,
        atom_locations=atoms,
        localized_at_atom=bool(near[index]) if atoms else None,
    )
    logger.debug(f"滑らかさ: 最大跳び {report.max_jump:.3e} at u={report.max_location}")
    return report


@dataclass
class ConvergenceReport:
    """
    入れ子のグリッドによる収束の検査

    Attributes:
        resolutions: グリッド点数（粗い順）
        differences: 最も細かい解との最大ノルム差（共通ノード上）
        successive: 隣り合う解の差
        order: 観測された収束次数
    """
    resolutions: List[int]
    differences: List[float]
    successive: List[float]
    order: Optional[float]

    def to_dict(self) -> Dict:
        return {
            'resolutions': self.resolutions,
            'differences': self.differences,
            'successive': self.successive,
            'order': self.order,
        }


def convergence_study(m: ModelParams, d: ClaimDistribution, cfg: Optional[SolverConfig] = None,
                      levels: int = 3) -> ConvergenceReport:
    """
    n, 2n−1, 4n−3, … 点のグリッドで解き、粗いグリッドのノード上で比較する

    Args:
        m: モデルパラメータ
        d: 請求額分布
        cfg: ソルバー設定（n が最も粗いグリッド）
        levels: 解像度の数（3 以上）

    Returns:
        ConvergenceReport
    """
    if levels < 3:
        raise ValueError("convergence study needs at least 3 resolutions")
    cfg = cfg or SolverConfig()

    resolutions = []
    solutions = []
    n = cfg.n
    for level in range(levels):
        grid = solve_g1(m, d, replace(cfg, n=n))
        stride = 2 ** level
        resolutions.append(n)
        solutions.append(grid.g1[::stride])
        n = 2 * n - 1

    finest = solutions[-1]
    differences = [float(np.max(np.abs(s - finest))) for s in solutions[:-1]]
    successive = [float(np.max(np.abs(a - b))) for a, b in zip(solutions[:-1], solutions[1:])]

    order = None
    if len(successive) >= 2 and successive[-1] > 0 and successive[-2] > 0:
        order = math.log2(successive[-2] / successive[-1])
    logger.info(f"収束検査: 点数={resolutions}, 観測次数={order}")
    return ConvergenceReport(resolutions=resolutions, differences=differences,
                             successive=successive, order=order)


@dataclass
class ComparisonRow:
    """1つの u での解析解とモンテカルロの比較"""
    u: float
    analytic: float
    psi_hat: float
    lower: float
    upper: float
    ci_half_width: float
    passed: bool

    def to_dict(self) -> Dict:
        return {
            'u': self.u,
            'analytic': self.analytic,
            'psi_hat': self.psi_hat,
            'lower': self.lower,
            'upper': self.upper,
            'ci_half_width': self.ci_half_width,
            'pass': self.passed,
        }


def compare_mc(curve: SurvivalCurve, estimates: Sequence[McEstimate]) -> List[ComparisonRow]:
    """
    解析的な Ψ(u) がモンテカルロの括弧を 3 半幅だけ広げた範囲に入るか

    Args:
        curve: 生存確率曲線
        estimates: McEstimate のリスト

    Returns:
        ComparisonRow のリスト（失敗も結果として返す）
    """
    rows = []
    for e in estimates:
        analytic = float(curve.psi_at(e.u))
        lo = e.lower - MC_WIDENING * e.ci_half_width
        hi = e.upper + MC_WIDENING * e.ci_half_width
        passed = lo <= analytic <= hi
        rows.append(ComparisonRow(u=e.u, analytic=analytic, psi_hat=e.psi_hat, lower=e.lower,
                                  upper=e.upper, ci_half_width=e.ci_half_width, passed=passed))
        if not passed:
            logger.warning(f"u={e.u:g}: 解析値 {analytic:.5g} が [{lo:.5g}, {hi:.5g}] の外")
    return rows


def inject_phi0_error(curve: SurvivalCurve, factor: float = 0.5) -> SurvivalCurve:
    """
    Φ(0+) を factor 倍に壊した曲線（比較器の陰性対照用）

    Φ = φ₀′(1 + ∫g₁)、Ψ = 1 − Φ で組み直す。元の曲線は変更しない。
    """
    phi0 = curve.phi0 * factor
    phi = phi0 * (1.0 + curve.cumulative)
    return replace(curve, phi0=phi0, phi=phi, psi=1.0 - phi)


@dataclass
class DecayReport:
    """g₁ の有界性と可積分性の経験的確認"""
    sup_g1: float
    tail_exponent: Optional[float]
    epsilon: Optional[float]
    ok: bool

    def to_dict(self) -> Dict:
        return {
            'sup_g1': self.sup_g1,
            'tail_exponent': self.tail_exponent,
            'epsilon': self.epsilon,
            'ok': self.ok,
        }


def decay_check(grid: SolutionGrid, report: AssumptionReport, tolerance: float = 0.05) -> DecayReport:
    """
    sup g₁ が有限で、裾の指数が 1+ε 以上（5% の許容）かを確認

    Args:
        grid: ソルバーの出力
        report: 仮定の検査結果（ε を使う）
        tolerance: 指数の相対許容

    Returns:
        DecayReport
    """
    g1 = grid.g1 / grid.scale
    sup_g1 = float(np.max(np.abs(g1)))
    if grid.is_trivial:
        return DecayReport(sup_g1=sup_g1, tail_exponent=None, epsilon=report.epsilon, ok=True)

    exponent, _, _ = fit_power_tail(grid.nodes, tail_profile(grid), grid.u_max / 10.0)
    eps = report.epsilon or 0.0
    ok = math.isfinite(sup_g1) and exponent >= (1.0 + eps) * (1.0 - tolerance)
    return DecayReport(sup_g1=sup_g1, tail_exponent=exponent, epsilon=report.epsilon, ok=ok)


def build_report(residual: ResidualReport, smoothness: SmoothnessReport, decay: DecayReport,
                 comparison: List[ComparisonRow], residual_tol: float,
                 fixed_point: Optional[FixedPointReport] = None) -> Tuple[Dict, bool]:
    """
    検証結果をまとめて JSON 用の辞書と合否を返す

    合否はモンテカルロ比較と IDE 残差で決める
    """
    comparison_ok = all(row.passed for row in comparison)
    residual_ok = residual.max_norm <= residual_tol
    passed = comparison_ok and residual_ok
    result = {
        'pass': passed,
        'residual_tol': residual_tol,
        'ide_residual': residual.to_dict(),
        'smoothness': smoothness.to_dict(),
        'decay': decay.to_dict(),
        'mc_comparison': [row.to_dict() for row in comparison],
        'checks': {'mc_comparison': comparison_ok, 'ide_residual': residual_ok},
    }
    if fixed_point is not None:
        result['fixed_point'] = fixed_point.to_dict()
    return result, passed
