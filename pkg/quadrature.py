"""
特異重み求積モジュール
重み w(t) = t^{γ−2} e^{−α/t} の評価と、前進解法で使う積積分（product integration）の基本演算
"""
import math
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from errors import DomainError
from logger import get_logger

logger = get_logger(__name__)

# 正規化数の最小値の対数。これ未満の指数は 0 に切り捨てる
LOG_TINY = math.log(np.finfo(float).tiny)

GAUSS_POINTS = 8
GAUSS_POINTS_WIDE = 64
# e^{-TAU_CUTOFF} は倍精度の丸めより十分小さい
TAU_CUTOFF = 60.0


class WeightIntegralRatio(NamedTuple):
    """∫₀^u t^p e^{−α/t} dt / (u^{p+1} e^{−α/u}) の値とアンダーフローフラグ"""
    value: float
    underflow: bool


class WeightEvaluator:
    """
    積分因子の重み w(t) = t^{γ−2} e^{−α/t} を対数空間で評価する

    Args:
        gamma: 構造パラメータ γ
        alpha: 構造パラメータ α (> 0)
    """

    def __init__(self, gamma: float, alpha: float):
        if not alpha > 0:
            raise DomainError(f"alpha must be positive (got {alpha})")
        self.gamma = float(gamma)
        self.alpha = float(alpha)
        self.log_floor = LOG_TINY
        # t < t_floor では α/t だけで指数が下限を割る
        self.t_floor = self.alpha / -LOG_TINY

    def log_weight(self, t) -> np.ndarray:
        """ln w(t)。t = 0 では −∞"""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, -np.inf)
        pos = t > 0
        tp = t[pos]
        out[pos] = (self.gamma - 2.0) * np.log(tp) - self.alpha / tp
        return out

    def log_scale(self, t) -> np.ndarray:
        """ln E(t)、E(t) = t^γ e^{−α/t}（H = E·g の換算係数）"""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, -np.inf)
        pos = t > 0
        tp = t[pos]
        out[pos] = self.gamma * np.log(tp) - self.alpha / tp
        return out

    def weight(self, t):
        """
        重み w(t)

        指数が正規化数の下限を割る場合は厳密に 0 を返す（0·∞ = NaN を避ける）

        Args:
            t: 準備金（スカラーまたは配列, t ≥ 0）

        Returns:
            w(t) ≥ 0
        """
        if np.any(np.asarray(t) < 0):
            raise DomainError("weight is defined for t >= 0 only")
        logw = self.log_weight(t)
        out = np.zeros(logw.shape)
        live = logw >= self.log_floor
        out[live] = np.exp(logw[live])
        return float(out) if out.ndim == 0 else out

    def asymptotic_weight_integral(self, u: float, p: float) -> WeightIntegralRatio:
        """
        比 ∫₀^u t^p e^{−α/t} dt / (u^{p+1} e^{−α/u}) を計算する減衰率の診断量

        u → 0 で u/α、u → ∞ で 1/(p+1) に近づく

        Args:
            u: 準備金 (> 0)
            p: 指数

        Returns:
            WeightIntegralRatio（e^{−α/u} がアンダーフローする場合は 0 とフラグ）
        """
        if not u > 0:
            raise DomainError(f"u must be positive (got {u})")
        if -self.alpha / u < LOG_TINY:
            return WeightIntegralRatio(0.0, True)

        # s = α/t − α/u = y と置換すると比は c ∫₀^∞ e^{−y} (1 + c y)^{−(p+2)} dy, c = u/α
        c = u / self.alpha
        value, _ = integrate.quad(
            lambda y: math.exp(-y) * (1.0 + c * y) ** (-(p + 2.0)),
            0.0, math.inf, limit=200)
        return WeightIntegralRatio(c * value, False)


def cell_log_widths(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """
    セル [a, b] の変数 τ = −α(1/t − 1/b) での長さ δ = α(b − a)/(ab)

    δ > 1 のセルでは e^{−α/t} がセル内で桁違いに変化する（a = 0 なら δ = ∞）
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(a > 0, alpha * (b - a) / np.where(a > 0, a * b, 1.0), np.inf)


class ProductTrapezoid:
    """
    一様グリッド上の積台形則

    各セル [t_i, t_{i+1}] で重み w を f の線形補間に対して積分する:
        ∫ w f ≈ A_i f_i + B_i f_{i+1}
    セル積分は τ = −α(1/t − 1/t_{i+1}) に変数変換したガウス・ルジャンドル則で求め
    （原点近傍の δ > 1 のセルは GAUSS_POINTS_WIDE 点）、
    E(t_{i+1}) で割ったスケール済みの重み Â_i, B̂_i として保持する（アンダーフローしない）。

    Args:
        evaluator: 重みの評価器
        h: グリッド幅
        n: グリッド点数
    """

    def __init__(self, evaluator: WeightEvaluator, h: float, n: int):
        if n < 2 or not h > 0:
            raise DomainError(f"grid needs n >= 2 and h > 0 (got n={n}, h={h})")
        self.evaluator = evaluator
        self.h = float(h)
        self.n = int(n)
        self.nodes = self.h * np.arange(self.n)
        self.log_E = evaluator.log_scale(self.nodes)
        self.A_hat, self.B_hat = self._scaled_cell_weights()
        self.rho = self._scale_ratios()

        # 非スケールの重み。E がアンダーフローする領域は厳密に 0
        log_E_right = self.log_E[1:]
        scale = np.where(log_E_right >= LOG_TINY, np.exp(np.maximum(log_E_right, LOG_TINY)), 0.0)
        self.A = self.A_hat * scale
        self.B = self.B_hat * scale
        live = np.nonzero(scale > 0)[0]
        self.first_live_cell = int(live[0]) if live.size else self.n - 1

    def _cell_integrals(self, a: np.ndarray, b: np.ndarray, points: int):
        gamma = self.evaluator.gamma
        alpha = self.evaluator.alpha
        x, w = leggauss(points)
        xi = 0.5 * (x + 1.0)

        # τ = ln v ∈ [−δ, 0]、t = b/(1 + s)、s = −bτ/α。e^τ < e^{−TAU_CUTOFF} の部分は捨てる
        span = np.minimum(cell_log_widths(a, b, alpha), TAU_CUTOFF)
        tau = -span[:, None] * (1.0 - xi[None, :])
        s = -b[:, None] * tau / alpha
        r = 1.0 / (1.0 + s)
        kernel = np.exp(tau) * r ** (gamma + 1.0) * (0.5 * w[None, :]) * (span[:, None] / alpha)

        # b − t = b·s·r、t − a = (b − a − a·s)·r（桁落ちしない形）
        A_hat = np.sum(kernel * (b[:, None] * s), axis=1) / self.h
        B_hat = np.sum(kernel * ((b - a)[:, None] - a[:, None] * s), axis=1) / self.h
        return A_hat, B_hat

    def _scaled_cell_weights(self):
        a = self.nodes[:-1]
        b = self.nodes[1:]
        A_hat = np.empty(self.n - 1)
        B_hat = np.empty(self.n - 1)

        # 原点近傍のセルは τ 区間が長いので点数を増やす
        wide = cell_log_widths(a, b, self.evaluator.alpha) > 1.0
        for mask, points in ((wide, GAUSS_POINTS_WIDE), (~wide, GAUSS_POINTS)):
            if np.any(mask):
                A_hat[mask], B_hat[mask] = self._cell_integrals(a[mask], b[mask], points)
        return A_hat, B_hat

    def _scale_ratios(self) -> np.ndarray:
        """ρ_i = E(t_i)/E(t_{i+1})（ρ_0 = 0）"""
        rho = np.zeros(self.n - 1)
        rho[1:] = np.exp(self.log_E[1:-1] - self.log_E[2:])
        return rho

    def cells(self, f: np.ndarray) -> np.ndarray:
        """各セルの ∫ w f（長さ n−1）"""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n:
            raise DomainError(f"grid function must have {self.n} values (got {f.shape[0]})")
        return self.A * f[:-1] + self.B * f[1:]

    def integrate_weighted(self, f: np.ndarray, i_lo: int, i_hi: int) -> float:
        """
        ∫_{t_{i_lo}}^{t_{i_hi}} w(t) f(t) dt（積台形則）

        Args:
            f: グリッド関数（n 点）
            i_lo: 開始インデックス
            i_hi: 終了インデックス（i_lo ≤ i_hi）

        Returns:
            積分値

        Raises:
            DomainError: インデックスが範囲外
        """
        if not 0 <= i_lo <= i_hi <= self.n - 1:
            raise DomainError(f"index range [{i_lo}, {i_hi}] outside grid of {self.n} points")
        # 重みが 0 の領域は飛ばす
        start = max(i_lo, self.first_live_cell)
        if start >= i_hi:
            return 0.0
        return float(np.sum(self.cells(f)[start:i_hi]))

    def cumulative(self, f: np.ndarray) -> np.ndarray:
        """全ノードでの累積積分 ∫₀^{t_k} w f（先頭は 0）"""
        return np.concatenate(([0.0], np.cumsum(self.cells(f))))


def integrate_weighted(rule: ProductTrapezoid, f: np.ndarray, i_lo: int, i_hi: int) -> float:
    """ProductTrapezoid.integrate_weighted の関数版"""
    return rule.integrate_weighted(f, i_lo, i_hi)
