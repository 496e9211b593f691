"""
ボルテラ積分方程式ソルバー
Φ(0+) = 1 に正規化した g₁ = Φ′ を、原点近傍のピカール反復と H関数の前進解法で求める
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from errors import ConfigError, SolverError
from logger import get_logger
from model import (ClaimDistribution, DerivedParams, ModelParams, check_assumptions,
                   derive_params)
from quadrature import ProductTrapezoid, WeightEvaluator

logger = get_logger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """
    ソルバー設定

    u_max と u0_init は None のとき solve_g1 が既定値を決める:
        u_max = 50·max(1, 平均請求額, α/γ)
        u0_init = min(1, α/γ)/4

    Attributes:
        u_max: 準備金の打ち切り点
        n: グリッド点数（h = u_max/(n−1)）
        u0_init: 局所区間の初期値
        picard_tol: ピカール反復の停止許容差（自由項の大きさ q·λ/c に対する相対値）
        picard_max_iter: 反復回数の上限
        contraction_target: 要求する経験的縮小率 (0, 1)
        max_halvings: u₀ を半分にする回数の上限
    """
    u_max: Optional[float] = None
    n: int = 16385
    u0_init: Optional[float] = None
    picard_tol: float = 1e-12
    picard_max_iter: int = 500
    contraction_target: float = 0.9
    max_halvings: int = 20

    def validate(self):
        """不変条件を検査（u_max, u0_init が確定している前提）"""
        if self.n < 2:
            raise ConfigError(f"solver.n must be >= 2 (got {self.n})")
        if not self.picard_tol > 0:
            raise ConfigError(f"solver.picard_tol must be positive (got {self.picard_tol})")
        if not 0 < self.contraction_target < 1:
            raise ConfigError(
                f"solver.contraction_target must lie in (0, 1) (got {self.contraction_target})")
        if self.picard_max_iter < 1:
            raise ConfigError("solver.picard_max_iter must be >= 1")
        if self.u_max is not None and self.u0_init is not None:
            if not self.u_max > self.u0_init > 0:
                raise ConfigError(
                    f"need u_max > u0_init > 0 (got u_max={self.u_max}, u0_init={self.u0_init})")

    def resolved(self, dp: DerivedParams, d: ClaimDistribution) -> 'SolverConfig':
        """既定値を埋めた設定を返す"""
        u_max = self.u_max
        if u_max is None:
            u_max = 50.0 * max(1.0, d.typical_size(), dp.alpha / dp.gamma)
        u0_init = self.u0_init
        if u0_init is None:
            u0_init = min(1.0, dp.alpha / dp.gamma) / 4.0
        cfg = replace(self, u_max=float(u_max), u0_init=float(min(u0_init, 0.5 * u_max)))
        cfg.validate()
        return cfg


class Discretization:
    """
    一様グリッドと求積重み・裾関数値のまとめ

    Args:
        dp: 構造パラメータ
        d: 請求額分布
        u_max: 打ち切り点
        n: グリッド点数
    """

    def __init__(self, dp: DerivedParams, d: ClaimDistribution, u_max: float, n: int):
        self.dp = dp
        self.distribution = d
        self.n = int(n)
        self.h = float(u_max) / (self.n - 1)
        self.evaluator = WeightEvaluator(dp.gamma, dp.alpha)
        self.rule = ProductTrapezoid(self.evaluator, self.h, self.n)
        self.nodes = self.rule.nodes
        # 原子上のノードは右連続な値 F̄(atom) を使う
        self.tail = np.asarray(d.tail(self.nodes), dtype=float)


@dataclass
class LocalSolution:
    """原点近傍 [0, u₀] のピカール解"""
    g: np.ndarray
    u0_used: float
    i0: int
    iterations: int
    halvings: int
    differences: List[float] = field(default_factory=list)

    @property
    def ratios(self) -> List[float]:
        """反復差の比 ‖g_{k+1}−g_k‖/‖g_k−g_{k−1}‖"""
        d = self.differences
        return [d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0]


@dataclass
class SolutionGrid:
    """
    離散化された g₁ と H関数

    Attributes:
        nodes: 一様グリッド 0 = t₀ < … < t_{n−1} = u_max
        g1: Φ(0+) = scale としたときの g
        H: H(u) = u^γ e^{−α/u} g(u)
        Bg: 畳み込み (Bg)(t)
        tail: F̄ のノード値
        u0_used: 採用した局所区間
        i0: u0_used に対応するノード番号
        h: グリッド幅
        dp: 構造パラメータ
        scale: 自由項 Φ(0+) の値（通常 1）
        local: ピカール反復の記録
    """
    nodes: np.ndarray
    g1: np.ndarray
    H: np.ndarray
    Bg: np.ndarray
    tail: np.ndarray
    u0_used: float
    i0: int
    h: float
    dp: DerivedParams
    scale: float
    local: LocalSolution
    distribution: Optional[ClaimDistribution] = None

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def u_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def is_trivial(self) -> bool:
        """λ = 0（解が恒等的に 0）"""
        return self.dp.mu == 0.0

    def to_rows(self) -> List[List[float]]:
        """CSV行 (u, g1, H, Bg)"""
        return [[float(u), float(g), float(H), float(b)]
                for u, g, H, b in zip(self.nodes, self.g1, self.H, self.Bg)]

    def summary(self) -> Dict:
        return {
            'gamma': self.dp.gamma,
            'alpha': self.dp.alpha,
            'mu': self.dp.mu,
            'n': self.n,
            'h': self.h,
            'u_max': self.u_max,
            'u0_used': self.u0_used,
            'picard_iterations': self.local.iterations,
            'u0_halvings': self.local.halvings,
        }


def _convolve_known(g: np.ndarray, tail: np.ndarray, k: int, h: float) -> float:
    """
    (Bg)(t_k) のうち g_k を含まない部分

    h·(Σ_{j=1}^{k−1} g_{k−j} F̄_j + ½ g_0 F̄_k)。ペアワイズ総和（np.sum）で順序に依存しない
    """
    if k == 0:
        return 0.0
    inner = np.sum(g[k - 1:0:-1] * tail[1:k]) if k > 1 else 0.0
    return h * (inner + 0.5 * g[0] * tail[k])


def convolve_nodes(g: np.ndarray, tail: np.ndarray, i: int, h: float) -> float:
    """台形則による (Bg)(t_i)（F̄ のノード値を与える版）"""
    if i == 0:
        return 0.0
    return _convolve_known(g, tail, i, h) + 0.5 * h * g[i] * tail[0]


def convolve(g: np.ndarray, d: ClaimDistribution, i: int, h: float) -> float:
    """
    畳み込み (Bg)(t_i) = ∫₀^{t_i} g(t_i − y) F̄(y) dy を台形則で計算

    Args:
        g: ノード 0..i での g の値
        d: 請求額分布
        i: ノード番号
        h: グリッド幅

    Returns:
        (Bg)(t_i)
    """
    tail = np.asarray(d.tail(h * np.arange(i + 1)), dtype=float)
    return convolve_nodes(np.asarray(g, dtype=float), tail, i, h)


def convolve_all(g: np.ndarray, tail: np.ndarray, h: float) -> np.ndarray:
    """全ノードでの台形則畳み込み（ベクトル化版）"""
    m = g.size
    full = np.convolve(g, tail[:m])[:m]
    out = h * (full - 0.5 * (g * tail[0] + g[0] * tail[:m]))
    out[0] = 0.0
    return out


def _picard_once(disc: Discretization, g: np.ndarray, i0: int, q: float) -> np.ndarray:
    """写像 T を [0, t_{i0}] 上で一回適用"""
    dp = disc.dp
    tail = disc.tail[:i0 + 1]
    rule = disc.rule
    f = q * tail + convolve_all(g, disc.tail, disc.h)

    # Q_m = (1/E_m) ∫₀^{t_m} w f を漸化式で計算
    out = np.empty(i0 + 1)
    out[0] = q * dp.lambda_over_c
    Q = 0.0
    for m in range(i0):
        Q = rule.rho[m] * Q + rule.A_hat[m] * f[m] + rule.B_hat[m] * f[m + 1]
        out[m + 1] = dp.mu * Q
    return out


def picard_local(dp: DerivedParams, d: ClaimDistribution, cfg: SolverConfig,
                 disc: Optional[Discretization] = None, scale: float = 1.0) -> LocalSolution:
    """
    原点近傍でピカール反復 g_{k+1} = T g_k を行う

    g₀ ≡ λ/c から始め、反復差の比が contraction_target を超えたら u₀ を半分にしてやり直す。
    g(0) は λ/c（ロピタルの極限）に固定する。

    Args:
        dp: 構造パラメータ (γ > 1)
        d: 請求額分布
        cfg: ソルバー設定
        disc: 離散化（省略時は cfg から生成）
        scale: 自由項 Φ(0+) の値

    Returns:
        LocalSolution

    Raises:
        SolverError: 縮小しない・反復回数の上限
    """
    if not dp.gamma > 1:
        raise SolverError(f"gamma must exceed 1 (gamma = {dp.gamma:.6g})", code='gamma')
    cfg = cfg.resolved(dp, d)
    if disc is None:
        disc = Discretization(dp, d, cfg.u_max, cfg.n)

    q = float(scale)
    g_start = q * dp.lambda_over_c
    tol = cfg.picard_tol * (abs(g_start) if g_start != 0 else 1.0)

    u0 = cfg.u0_init
    for halvings in range(cfg.max_halvings + 1):
        i0 = max(1, min(disc.n - 1, int(round(u0 / disc.h))))
        g = np.full(i0 + 1, g_start)
        differences = []
        contracted = True

        for iteration in range(1, cfg.picard_max_iter + 1):
            g_next = _picard_once(disc, g, i0, q)
            diff = float(np.max(np.abs(g_next - g)))
            differences.append(diff)
            g = g_next

            if diff <= tol:
                local = LocalSolution(g=g, u0_used=float(disc.nodes[i0]), i0=i0,
                                      iterations=iteration, halvings=halvings,
                                      differences=differences)
                logger.debug(f"ピカール反復が収束: u0={local.u0_used:.6g}, "
                             f"反復={iteration}, 半減={halvings}")
                return local

            if len(differences) >= 2 and differences[-2] > 0:
                if diff / differences[-2] > cfg.contraction_target:
                    contracted = False
                    break
        else:
            raise SolverError(
                f"Picard iteration hit max iterations ({cfg.picard_max_iter}) on [0, {u0:.6g}]",
                code='max_iterations')

        if not contracted:
            logger.info(f"縮小率が不足: u0={u0:.6g} を半分にします")
            u0 *= 0.5

    raise SolverError(
        f"no contraction after {cfg.max_halvings} halvings of u0", code='no_contraction')


def march_global(local: LocalSolution, dp: DerivedParams, d: ClaimDistribution,
                 cfg: SolverConfig, disc: Optional[Discretization] = None,
                 scale: float = 1.0) -> SolutionGrid:
    """
    H関数の前進解法で g を [u₀, u_max] に延長

    各ステップで未知の g_{k} は (Bg)(t_k) の端点項にだけ現れるので、
    スカラーの一次方程式を厳密に解く。

    Args:
        local: picard_local の結果
        dp: 構造パラメータ
        d: 請求額分布
        cfg: ソルバー設定
        disc: 離散化（picard_local と同じもの）
        scale: 自由項 Φ(0+) の値

    Returns:
        SolutionGrid

    Raises:
        SolverError: 端点係数が 1 以上・非正の解
    """
    cfg = cfg.resolved(dp, d)
    if disc is None:
        disc = Discretization(dp, d, cfg.u_max, cfg.n)

    q = float(scale)
    n, h, mu = disc.n, disc.h, dp.mu
    tail = disc.tail
    rule = disc.rule
    i0 = local.i0

    g = np.zeros(n)
    g[:i0 + 1] = local.g
    Bg = np.zeros(n)
    Bg[:i0 + 1] = convolve_all(g[:i0 + 1], tail, h)

    endpoint = 0.5 * h * tail[0]
    for i in range(i0, n - 1):
        k = i + 1
        coef = mu * rule.B_hat[i] * endpoint
        if coef >= 1.0:
            raise SolverError(
                f"step not contractive at u={disc.nodes[k]:.6g} (coefficient {coef:.3g}); refine the grid",
                code='step_not_contractive')
        known = _convolve_known(g, tail, k, h)
        f_i = q * tail[i] + Bg[i]
        rhs = (rule.rho[i] * g[i]
               + mu * (rule.A_hat[i] * f_i + rule.B_hat[i] * (q * tail[k] + known)))
        g[k] = rhs / (1.0 - coef)
        Bg[k] = known + endpoint * g[k]

    if mu > 0 and q > 0:
        bad = np.nonzero(g[1:] <= 0)[0]
        if bad.size:
            u_bad = disc.nodes[bad[0] + 1]
            raise SolverError(f"non-positive solution at u={u_bad:.6g}", code='non_positive')

    # H は非負の増分の累積和
    f = q * tail + Bg
    increments = mu * rule.cells(f)
    H = np.concatenate(([0.0], np.cumsum(increments)))

    return SolutionGrid(
        nodes=disc.nodes,
        g1=g,
        H=H,
        Bg=Bg,
        tail=tail,
        u0_used=local.u0_used,
        i0=i0,
        h=h,
        dp=dp,
        scale=q,
        local=local,
        distribution=d,
    )


def solve_g1(m: ModelParams, d: ClaimDistribution, cfg: Optional[SolverConfig] = None,
             scale: float = 1.0) -> SolutionGrid:
    """
    g₁（Φ(0+) = 1 に対応する解）を求める

    Args:
        m: モデルパラメータ
        d: 請求額分布
        cfg: ソルバー設定（省略時は既定値）
        scale: 自由項 Φ(0+) の値（線形性の検査用）

    Returns:
        SolutionGrid

    Raises:
        AssumptionError: A1/A3 の不成立
        SolverError: 数値計算の失敗
    """
    report = check_assumptions(m, d)
    report.require_solvable()

    dp = derive_params(m)
    cfg = (cfg or SolverConfig()).resolved(dp, d)
    logger.info(f"求解開始: gamma={dp.gamma:.6g}, alpha={dp.alpha:.6g}, mu={dp.mu:.6g}, "
                f"n={cfg.n}, u_max={cfg.u_max:.6g}")

    disc = Discretization(dp, d, cfg.u_max, cfg.n)
    local = picard_local(dp, d, cfg, disc=disc, scale=scale)
    grid = march_global(local, dp, d, cfg, disc=disc, scale=scale)

    logger.info(f"求解完了: u0={grid.u0_used:.6g}, g1(0)={grid.g1[0]:.6g}, "
                f"H(u_max)={grid.H[-1]:.6g}")
    return grid
