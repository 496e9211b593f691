"""
生存確率の組み立てモジュール
g₁ の積分、正規化 Φ(0+) = 1/(1+I₁)、グリッド上の Φ, Ψ と裾の打ち切り補正
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.integrate import cumulative_trapezoid, trapezoid

from errors import SolverError
from logger import get_logger
from volterra_solver import SolutionGrid

logger = get_logger(__name__)

# 裾のべき乗則フィットに使う区間（最後の1桁と最後の半桁）
FIT_DECADE = 10.0
FIT_HALF_DECADE = math.sqrt(10.0)
MIN_TAIL_EXPONENT = 1.02


def fit_power_tail(u: np.ndarray, values: np.ndarray, lower: float) -> Tuple[float, float, float]:
    """
    u ≥ lower の範囲で ln values = ln A − p ln u を最小二乗フィット

    Returns:
        (p, A, 残差の標準偏差)
    """
    mask = (u >= lower) & (u > 0) & (values > 0)
    if np.count_nonzero(mask) < 3:
        raise SolverError("too few positive tail points for a power-law fit", code='tail_fit')
    x = np.log(u[mask])
    y = np.log(values[mask])
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    return float(-slope), float(math.exp(intercept)), float(np.std(residuals))


def tail_profile(grid: SolutionGrid) -> np.ndarray:
    """
    g₁(u)·e^{−α/u} = H(u) u^{−γ}（grid.scale で割った値、u = 0 では 0）

    g₁ そのものは e^{α/u} の因子で裾の傾きが急に見えるので、べき乗則のフィットはこちらで行う
    """
    u = grid.nodes
    out = np.zeros(u.shape)
    pos = u > 0
    out[pos] = grid.g1[pos] * np.exp(-grid.dp.alpha / u[pos]) / grid.scale
    return out


def weighted_exponential_moment(p: float, beta: float) -> float:
    """
    J(p, β) = ∫₀¹ x^{p−2} e^{βx} dx（p > 1）

    x = u/v と置くと ∫_u^∞ v^{−p} e^{α/v} dv = u^{1−p} J(p, α/u)
    """
    if not p > 1.0:
        return math.inf
    value, _ = integrate.quad(lambda x: math.exp(beta * x), 0.0, 1.0,
                              weight='alg', wvar=(p - 2.0, 0.0))
    return float(value)


def _power_tail_mass(coefficient: float, exponent: float, u: float, alpha: float) -> float:
    """∫_u^∞ A v^{−p} e^{α/v} dv"""
    return coefficient * u ** (1.0 - exponent) * weighted_exponential_moment(exponent, alpha / u)


@dataclass(frozen=True)
class TailContinuation:
    """
    u > u_max での g₁ の延長 g₁(u) = Ĥ(u) u^{−γ} e^{α/u}

    H の増分 dH/du ≈ C u^{−e} をべき乗則で延ばし
        Ĥ(u) = offset + slope·u^{1−e},  slope = C/(1−e)
    とする。e > 1 なら offset = lim H。slope = 0 は H(u_max) で打ち切った下側の延長。

    Attributes:
        offset: Ĥ の定数部分
        slope: u^{1−e} の係数
        exponent: 増分の指数 e
        gamma: 構造パラメータ γ
        alpha: 構造パラメータ α
    """
    offset: float
    slope: float
    exponent: float
    gamma: float
    alpha: float

    @property
    def bounded(self) -> bool:
        """Ĥ が有限の極限を持つか"""
        return self.slope == 0.0 or self.exponent > 1.0

    @property
    def limit(self) -> float:
        """lim Ĥ(u)（有界でなければ ∞）"""
        return self.offset if self.bounded else math.inf

    def h_at(self, u):
        """Ĥ(u)"""
        u = np.asarray(u, dtype=float)
        if self.slope == 0.0:
            return np.full(u.shape, self.offset)
        return self.offset + self.slope * u ** (1.0 - self.exponent)

    def mass(self, u: float) -> float:
        """∫_u^∞ Ĥ(v) v^{−γ} e^{α/v} dv"""
        u = float(u)
        beta = self.alpha / u
        total = self.offset * u ** (1.0 - self.gamma) * weighted_exponential_moment(self.gamma, beta)
        if self.slope != 0.0:
            p = self.gamma + self.exponent - 1.0
            total += self.slope * u ** (1.0 - p) * weighted_exponential_moment(p, beta)
        return float(total)


def fit_continuation(grid: SolutionGrid) -> TailContinuation:
    """
    H の増分を最後の半桁でべき乗則にフィットして TailContinuation を作る

    フィットできない・延長が可積分にならない場合は H(u_max) で打ち切った延長を返す
    """
    dp = grid.dp
    u_max = grid.u_max
    H = grid.H / grid.scale
    H_max = float(H[-1])
    floor = TailContinuation(offset=H_max, slope=0.0, exponent=math.inf,
                             gamma=dp.gamma, alpha=dp.alpha)

    midpoints = grid.nodes[:-1] + 0.5 * grid.h
    rates = np.diff(H) / grid.h
    try:
        e, C, _ = fit_power_tail(midpoints, rates, u_max / FIT_HALF_DECADE)
    except SolverError:
        logger.warning("H の増分をフィットできません: H(u_max) で打ち切ります")
        return floor
    if abs(e - 1.0) < 1e-9 or not dp.gamma + e - 1.0 > 1.0:
        logger.warning(f"H の増分の指数 {e:.4g} では延長が可積分になりません: H(u_max) で打ち切ります")
        return floor

    slope = C / (1.0 - e)
    offset = H_max - slope * u_max ** (1.0 - e)
    return TailContinuation(offset=offset, slope=slope, exponent=e,
                            gamma=dp.gamma, alpha=dp.alpha)


@dataclass(frozen=True)
class TailFit:
    """
    [u_max, ∞) の g₁ の質量の推定

    Attributes:
        exponent: g₁e^{−α/u} ≈ A u^{−p} の p（最後の1桁）
        coefficient: A
        residual_spread: 対数残差の標準偏差
        tail_mass: 延長 continuation による ∫_{u_max}^∞ g₁
        lower_mass: H(u_max) で打ち切った延長による質量（H は非減少なので下からの評価）
        upper_mass: A u^{−p} e^{α/u} による質量（局所指数は γ に向かって増えるので上からの評価）
        continuation: u_max より先の延長
    """
    exponent: float
    coefficient: float
    residual_spread: float
    tail_mass: float
    lower_mass: float
    upper_mass: float
    continuation: TailContinuation

    @property
    def error_bound(self) -> float:
        """tail_mass から括弧 [lower_mass, upper_mass] の両端までの距離の大きい方"""
        return max(abs(self.tail_mass - self.lower_mass), abs(self.upper_mass - self.tail_mass))


def integrate_g1(grid: SolutionGrid) -> Tuple[float, Optional[TailFit]]:
    """
    I₁ のうちグリッド部分 ∫₀^{u_max} g₁ と裾の延長を計算

    Args:
        grid: ソルバーの出力

    Returns:
        (グリッド部分の積分, TailFit)。λ = 0 のときは (0, None)。どちらも grid.scale 倍の量

    Raises:
        SolverError: フィットした指数が 1.02 以下（u_max が小さすぎるかソルバーの失敗）
    """
    if grid.is_trivial:
        return 0.0, None

    q = grid.scale
    alpha = grid.dp.alpha
    I1_grid = float(trapezoid(grid.g1, dx=grid.h))
    u_max = grid.u_max

    p, A, spread = fit_power_tail(grid.nodes, tail_profile(grid), u_max / FIT_DECADE)
    if p <= MIN_TAIL_EXPONENT:
        raise SolverError(
            f"tail not integrable-looking: fitted exponent {p:.4g} <= {MIN_TAIL_EXPONENT}; "
            f"increase u_max", code='tail_not_integrable')

    continuation = fit_continuation(grid)
    tail_mass = q * continuation.mass(u_max)
    lower_mass = (float(grid.H[-1]) * u_max ** (1.0 - grid.dp.gamma)
                  * weighted_exponential_moment(grid.dp.gamma, alpha / u_max))
    upper_mass = q * _power_tail_mass(A, p, u_max, alpha)

    fit = TailFit(exponent=p, coefficient=q * A, residual_spread=spread,
                  tail_mass=tail_mass, lower_mass=lower_mass, upper_mass=upper_mass,
                  continuation=continuation)
    logger.debug(f"裾: p={p:.5g}, 質量={tail_mass:.5g} [{lower_mass:.5g}, {upper_mass:.5g}]")
    return I1_grid, fit


def normalize(I1: float) -> float:
    """
    正規化条件 G(∞) = 1 から Φ(0+) = 1/(1 + I₁)

    Raises:
        ValueError: I₁ が負または有限でない
    """
    if not (math.isfinite(I1) and I1 >= 0):
        raise ValueError(f"I1 must be finite and non-negative (got {I1})")
    return 1.0 / (1.0 + I1)


@dataclass
class SurvivalCurve:
    """
    生存確率曲線

    Attributes:
        nodes: グリッド（SolutionGrid と共有）
        phi: Φ の値
        psi: Ψ = 1 − Φ（桁落ちしない形で保持）
        phi0: Φ(0+)
        I1_grid: ∫₀^{u_max} g₁
        I1_tail: ∫_{u_max}^∞ g₁ の外挿値
        tail_exponent: g₁e^{−α/u} の裾の指数
        tail_coefficient: g₁e^{−α/u} の裾の係数
        tail_error_bound: Φ(0+) を掛けた外挿部分の誤差の上限
        cumulative: ∫₀^u g₁ のノード値
        continuation: u_max より先の g₁ の延長
    """
    nodes: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    phi0: float
    I1_grid: float
    I1_tail: float
    tail_exponent: Optional[float]
    tail_coefficient: Optional[float]
    tail_error_bound: float
    cumulative: np.ndarray
    continuation: Optional[TailContinuation] = None

    @property
    def I1(self) -> float:
        return self.I1_grid + self.I1_tail

    @property
    def u_max(self) -> float:
        return float(self.nodes[-1])

    def psi_at(self, u):
        """
        任意の u での Ψ(u)

        グリッド内は線形補間、u_max より先は continuation の質量
        """
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.interp(u_arr, self.nodes, self.psi)
        beyond = u_arr > self.u_max
        if np.any(beyond):
            if self.continuation is None:
                out[beyond] = 0.0
            else:
                out[beyond] = [self.phi0 * self.continuation.mass(x) for x in u_arr[beyond]]
        return float(out[0]) if np.ndim(u) == 0 else out

    def phi_at(self, u):
        psi = self.psi_at(u)
        return 1.0 - psi

    def to_rows(self) -> List[List[float]]:
        """CSV行 (u, phi, psi)"""
        return [[float(u), float(p), float(s)] for u, p, s in zip(self.nodes, self.phi, self.psi)]

    def summary(self) -> Dict:
        return {
            'phi0': self.phi0,
            'I1': self.I1,
            'I1_grid': self.I1_grid,
            'I1_tail': self.I1_tail,
            'tail_exponent': self.tail_exponent,
            'tail_error_bound': self.tail_error_bound,
        }


def assemble(grid: SolutionGrid) -> SurvivalCurve:
    """
    G(u) = Φ(0+)(1 + ∫₀^u g₁) から Φ, Ψ を組み立てる

    Args:
        grid: ソルバーの出力（scale = 1 を想定。scale = q の場合も I₁ が q 倍になり
              正規化後の Φ は同じになる）

    Returns:
        SurvivalCurve
    """
    q = grid.scale
    if not q > 0:
        raise ValueError(f"free-term scale must be positive (got {q})")
    I1_grid, fit = integrate_g1(grid)
    cumulative = cumulative_trapezoid(grid.g1, dx=grid.h, initial=0.0)

    if fit is None:
        phi0 = normalize(0.0)
        return SurvivalCurve(
            nodes=grid.nodes,
            phi=np.ones(grid.n),
            psi=np.zeros(grid.n),
            phi0=phi0,
            I1_grid=0.0,
            I1_tail=0.0,
            tail_exponent=None,
            tail_coefficient=None,
            tail_error_bound=0.0,
            cumulative=cumulative,
        )

    # grid.g1 = q·g₁ なので積分を q で割って g₁ の量に戻す
    I1_total = (I1_grid + fit.tail_mass) / q
    phi0 = normalize(I1_total)
    cum1 = cumulative / q
    phi = phi0 * (1.0 + cum1)
    psi = phi0 * (I1_total - cum1)
    tail_error_bound = phi0 * fit.error_bound / q

    logger.info(f"正規化: I1={I1_total:.8g}, phi0={phi0:.8g}, 裾指数={fit.exponent:.4g}")
    return SurvivalCurve(
        nodes=grid.nodes,
        phi=phi,
        psi=psi,
        phi0=phi0,
        I1_grid=I1_grid / q,
        I1_tail=fit.tail_mass / q,
        tail_exponent=fit.exponent,
        tail_coefficient=fit.coefficient / q,
        tail_error_bound=tail_error_bound,
        cumulative=cum1,
        continuation=fit.continuation,
    )
