"""
モンテカルロ・オラクル
ジャンプ拡散の余剰過程をシミュレーションし、破産確率 Ψ(u) を解析解とは独立に推定する
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import ConfigError
from logger import get_logger
from model import ClaimDistribution, ModelParams, check_assumptions

logger = get_logger(__name__)

# 1ブロックのパス数。ブロック b は SeedSequence(seed) の b 番目の子を使う
BLOCK_SIZE = 4096
CENSORING_WARNING = 0.05
CONFIDENCE = 0.95

RUINED = 'ruined'
SURVIVED = 'survived'
CENSORED = 'censored'


@dataclass(frozen=True)
class SimConfig:
    """
    シミュレーション設定

    Attributes:
        horizon: シミュレーション期間 T
        dt_max: 拡散部分の最大ステップ幅
        n_paths: パス数
        seed: 64ビットのシード
        survival_barrier: 期間終了時にこれ以上なら「生存」とする水準（None なら既定値）
        u_values: 推定する初期準備金
        workers: 並列プロセス数（結果には影響しない）
    """
    horizon: float = 200.0
    dt_max: float = 0.05
    n_paths: int = 10000
    seed: int = 20240601
    survival_barrier: Optional[float] = None
    u_values: Tuple[float, ...] = (0.5, 1.0, 2.0, 5.0)
    workers: int = 1

    def validate(self):
        if not self.horizon > 0:
            raise ConfigError(f"simulation.horizon must be positive (got {self.horizon})")
        if not self.dt_max > 0:
            raise ConfigError(f"simulation.dt_max must be positive (got {self.dt_max})")
        if self.n_paths < 1:
            raise ConfigError(f"simulation.n_paths must be >= 1 (got {self.n_paths})")
        if self.workers < 1:
            raise ConfigError(f"simulation.workers must be >= 1 (got {self.workers})")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"simulation.seed must be an unsigned 64-bit integer (got {self.seed})")
        if any(not u > 0 for u in self.u_values):
            raise ConfigError("simulation.u_values must be positive")
        if self.survival_barrier is not None and self.u_values:
            if not self.survival_barrier > max(self.u_values):
                raise ConfigError(
                    f"simulation.survival_barrier must exceed max(u_values) "
                    f"(got {self.survival_barrier})")

    def resolved(self, d: ClaimDistribution) -> 'SimConfig':
        """既定のバリア 100·max(max u, 平均請求額) を埋めた設定を返す"""
        barrier = self.survival_barrier
        if barrier is None:
            barrier = 100.0 * max(max(self.u_values, default=0.0), d.typical_size())
        cfg = replace(self, survival_barrier=float(barrier),
                      u_values=tuple(float(u) for u in self.u_values))
        cfg.validate()
        return cfg


@dataclass
class McEstimate:
    """
    1つの初期準備金に対する推定

    Attributes:
        u: 初期準備金
        psi_hat: 破産したパスの割合
        ci_half_width: ウィルソン95%区間の半幅
        censored_fraction: 破産もせずバリアにも届かなかったパスの割合
        lower: 括弧の下端（破産割合）
        upper: 括弧の上端（破産割合 + 打ち切り割合）
    """
    u: float
    psi_hat: float
    ci_half_width: float
    censored_fraction: float
    lower: float
    upper: float
    n_paths: int
    ruined: int
    censored: int
    warning: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            'u': self.u,
            'psi_hat': self.psi_hat,
            'ci_half_width': self.ci_half_width,
            'censored_fraction': self.censored_fraction,
            'lower': self.lower,
            'upper': self.upper,
            'n_paths': self.n_paths,
            'ruined': self.ruined,
            'censored': self.censored,
            'warning': self.warning,
        }


@dataclass
class BlockResult:
    """1ブロックの集計（整数カウント）"""
    ruined: np.ndarray
    censored: np.ndarray
    outcomes: Optional[np.ndarray] = None
    ruin_times: Optional[np.ndarray] = None


@dataclass
class PathOutcome:
    """simulate_path の結果"""
    outcome: str
    ruin_time: Optional[float] = None


def wilson_half_width(successes: int, n: int, confidence: float = CONFIDENCE) -> float:
    """
    ウィルソンスコア区間の半幅

    Args:
        successes: 事象の回数
        n: 試行回数
        confidence: 信頼水準

    Returns:
        半幅
    """
    if n <= 0:
        return 0.0
    z = stats.norm.ppf(1.0 - (1.0 - confidence) / 2.0)
    phat = successes / n
    b = math.sqrt(phat * (1.0 - phat) / n + z ** 2 / (4.0 * n ** 2))
    c = 1.0 + z ** 2 / n
    return float(z * b / c)


def _simulate_block(m: ModelParams, d: ClaimDistribution, u_values: np.ndarray,
                    cfg: SimConfig, rng: np.random.Generator, size: int,
                    keep_paths: bool = False) -> BlockResult:
    """
    size 本のパスを同時に進める

    全ての初期準備金は同じ乱数列を共有する（共通乱数）。
    各反復で全パス分の正規乱数・請求額・到着間隔を引くので、乱数の消費はブロック内で決定的。
    """
    u_values = np.asarray(u_values, dtype=float)
    n_u = u_values.size
    drift = m.eta - 0.5 * m.diffusion ** 2
    vol = m.diffusion
    c = m.c
    horizon = cfg.horizon

    t = np.zeros(size)
    if m.lam > 0:
        next_jump = rng.standard_exponential(size) / m.lam
    else:
        next_jump = np.full(size, np.inf)

    X = np.repeat(u_values[:, None], size, axis=1)
    ruined = np.zeros((n_u, size), dtype=bool)
    ruin_time = np.full((n_u, size), np.nan)
    active = np.ones(size, dtype=bool)

    while active.any():
        z = rng.standard_normal(size)
        claims = np.broadcast_to(d.sample(rng, size), (size,))
        waits = rng.standard_exponential(size)

        gap = next_jump - t
        remaining = horizon - t
        h = np.minimum(np.minimum(cfg.dt_max, gap), remaining)
        h = np.where(active, h, 0.0)
        at_jump = active & (gap <= cfg.dt_max) & (gap <= remaining)
        at_end = active & (remaining <= np.minimum(cfg.dt_max, gap))

        # 斉次部分は厳密な対数正規因子、保険料は中点の積分因子
        G = np.exp(drift * h + vol * np.sqrt(h) * z)
        alive = ~ruined & active[None, :]
        X = np.where(alive, G * X + c * h * np.sqrt(G), X)
        t = np.where(at_jump, next_jump, t + h)
        t = np.where(at_end, horizon, t)

        # ジャンプ間は X > 0 のままのはずだが、ステップ境界でも検査する
        crossed = alive & (X <= 0)
        ruin_time = np.where(crossed, t[None, :], ruin_time)
        ruined |= crossed

        hit = alive & ~crossed & at_jump[None, :]
        X = np.where(hit, X - claims[None, :], X)
        crossed = hit & (X <= 0)
        ruin_time = np.where(crossed, t[None, :], ruin_time)
        ruined |= crossed

        if m.lam > 0:
            next_jump = np.where(at_jump, next_jump + waits / m.lam, next_jump)
        active = active & (t < horizon) & ~ruined.all(axis=0)

    survived = ~ruined & (X >= cfg.survival_barrier)
    censored = ~ruined & ~survived

    result = BlockResult(ruined=ruined.sum(axis=1), censored=censored.sum(axis=1))
    if keep_paths:
        outcomes = np.full((n_u, size), SURVIVED, dtype=object)
        outcomes[ruined] = RUINED
        outcomes[censored] = CENSORED
        result.outcomes = outcomes
        result.ruin_times = ruin_time
    return result


def simulate_path(m: ModelParams, d: ClaimDistribution, u: float, cfg: SimConfig,
                  rng: np.random.Generator) -> PathOutcome:
    """
    1本のパスをシミュレーション

    Args:
        m: モデルパラメータ
        d: 請求額分布
        u: 初期準備金 (> 0)
        cfg: シミュレーション設定
        rng: 乱数生成器

    Returns:
        PathOutcome（ruined なら破産時刻つき）
    """
    if not u > 0:
        raise ConfigError(f"initial reserve must be positive (got {u})")
    cfg = replace(cfg, u_values=(float(u),)).resolved(d)
    block = _simulate_block(m, d, np.array([u]), cfg, rng, 1, keep_paths=True)
    outcome = block.outcomes[0, 0]
    ruin_time = float(block.ruin_times[0, 0]) if outcome == RUINED else None
    return PathOutcome(outcome=outcome, ruin_time=ruin_time)


def _run_block(args) -> Tuple[np.ndarray, np.ndarray]:
    """ワーカー用（ピクル可能なトップレベル関数）"""
    m, d, u_values, cfg, seed_seq, size = args
    rng = np.random.default_rng(seed_seq)
    block = _simulate_block(m, d, u_values, cfg, rng, size)
    return block.ruined, block.censored


def block_sizes(n_paths: int, block_size: int = BLOCK_SIZE) -> List[int]:
    """n_paths をブロックに分割（最後のブロックは端数）"""
    full, rest = divmod(n_paths, block_size)
    return [block_size] * full + ([rest] if rest else [])


def estimate_psi(m: ModelParams, d: ClaimDistribution, cfg: Optional[SimConfig] = None) -> List[McEstimate]:
    """
    各初期準備金について破産確率を推定

    ブロックごとの整数カウントを合計するので、ワーカー数によらず結果は同一

    Args:
        m: モデルパラメータ
        d: 請求額分布
        cfg: シミュレーション設定

    Returns:
        u_values の順の McEstimate のリスト

    Raises:
        AssumptionError: γ ≤ 1（Ψ ≡ 1 で推定は無意味）
    """
    check_assumptions(m, d).require_solvable()
    cfg = (cfg or SimConfig()).resolved(d)
    if not cfg.u_values:
        return []

    u_values = np.asarray(cfg.u_values, dtype=float)
    sizes = block_sizes(cfg.n_paths)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    tasks = [(m, d, u_values, cfg, child, size) for child, size in zip(children, sizes)]

    growth = math.exp(m.eta * cfg.horizon) * float(u_values.min())
    if growth < cfg.survival_barrier:
        logger.warning(f"期間 {cfg.horizon} の決定的成長 {growth:.3g} がバリア "
                       f"{cfg.survival_barrier:.3g} に届きません")

    logger.info(f"モンテカルロ開始: paths={cfg.n_paths}, blocks={len(sizes)}, "
                f"workers={cfg.workers}, seed={cfg.seed}")
    ruined = np.zeros(u_values.size, dtype=np.int64)
    censored = np.zeros(u_values.size, dtype=np.int64)
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            for block_ruined, block_censored in executor.map(_run_block, tasks):
                ruined += block_ruined
                censored += block_censored
    else:
        for index, task in enumerate(tasks):
            block_ruined, block_censored = _run_block(task)
            ruined += block_ruined
            censored += block_censored
            logger.debug(f"ブロック {index + 1}/{len(tasks)} 完了")

    n = cfg.n_paths
    estimates = []
    for u, k, cens in zip(u_values, ruined, censored):
        k, cens = int(k), int(cens)
        censored_fraction = cens / n
        warning = None
        if censored_fraction > CENSORING_WARNING:
            warning = (f"excessive censoring ({censored_fraction:.1%}); "
                       f"increase the horizon or lower the barrier")
            logger.warning(f"u={u:g}: {warning}")
        estimates.append(McEstimate(
            u=float(u),
            psi_hat=k / n,
            ci_half_width=wilson_half_width(k, n),
            censored_fraction=censored_fraction,
            lower=k / n,
            upper=(k + cens) / n,
            n_paths=n,
            ruined=k,
            censored=cens,
            warning=warning,
        ))
    logger.info("モンテカルロ完了: " + ", ".join(f"psi({e.u:g})={e.psi_hat:.5g}" for e in estimates))
    return estimates


def estimates_from_records(records: Sequence[Dict]) -> List[McEstimate]:
    """mc.jsonl のレコードから McEstimate を復元"""
    fields = McEstimate.__dataclass_fields__
    return [McEstimate(**{k: v for k, v in r.items() if k in fields}) for r in records]
