"""
レポート出力モジュール
生存確率・破産確率の曲線を自己完結した SVG として生成
"""
import html
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from asymptotics import DIVERGENT, AsymptoticsReport
from survival import SurvivalCurve

WIDTH = 900
PANEL_HEIGHT = 300
MARGIN = 60
MAX_POINTS = 400

Point = Tuple[float, float]


def fmt(value: float) -> str:
    """座標は小数4桁固定（同じ入力なら同じバイト列）"""
    return f"{value:.4f}"


class Panel:
    """
    1枚のグラフ領域

    Args:
        top: パネル上端の y 座標
        x_range: データの x 範囲
        y_range: データの y 範囲
        log_x: x を対数軸にする
        log_y: y を対数軸にする
    """

    def __init__(self, top: float, x_range: Tuple[float, float], y_range: Tuple[float, float],
                 log_x: bool = False, log_y: bool = False):
        self.top = top
        self.log_x = log_x
        self.log_y = log_y
        self.x0, self.x1 = self._axis(x_range, log_x)
        self.y0, self.y1 = self._axis(y_range, log_y)
        self.left = MARGIN
        self.right = WIDTH - MARGIN / 2
        self.bottom = top + PANEL_HEIGHT - MARGIN

    @staticmethod
    def _axis(bounds: Tuple[float, float], log: bool) -> Tuple[float, float]:
        lo, hi = bounds
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            hi = lo + 1.0
        return lo, hi

    def map(self, x: float, y: float) -> Point:
        if self.log_x:
            x = math.log10(x)
        if self.log_y:
            y = math.log10(y)
        px = self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
        py = self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top - 20)
        return px, py

    def polyline(self, xs: Sequence[float], ys: Sequence[float], css_class: str,
                 element_id: Optional[str] = None) -> str:
        points = " ".join(f"{fmt(px)},{fmt(py)}" for px, py in
                          (self.map(x, y) for x, y in zip(xs, ys)))
        id_attr = f' id="{element_id}"' if element_id else ''
        return f'  <polyline{id_attr} class="{css_class}" points="{points}"/>\n'

    def frame(self, title: str, x_label: str, y_label: str) -> str:
        lines = [
            f'  <rect class="frame" x="{fmt(self.left)}" y="{fmt(self.top + 20)}" '
            f'width="{fmt(self.right - self.left)}" height="{fmt(self.bottom - self.top - 20)}"/>\n',
            f'  <text class="title" x="{fmt(self.left)}" y="{fmt(self.top + 14)}">{html.escape(title)}</text>\n',
            f'  <text class="label" x="{fmt(self.right)}" y="{fmt(self.bottom + 30)}" '
            f'text-anchor="end">{html.escape(x_label)}</text>\n',
            f'  <text class="label" x="{fmt(self.left - 8)}" y="{fmt(self.top + 34)}" '
            f'text-anchor="end">{html.escape(y_label)}</text>\n',
            f'  <text class="tick" x="{fmt(self.left)}" y="{fmt(self.bottom + 16)}">'
            f'{self._tick(self.x0, self.log_x)}</text>\n',
            f'  <text class="tick" x="{fmt(self.right)}" y="{fmt(self.bottom + 16)}" '
            f'text-anchor="end">{self._tick(self.x1, self.log_x)}</text>\n',
            f'  <text class="tick" x="{fmt(self.left - 4)}" y="{fmt(self.bottom)}" '
            f'text-anchor="end">{self._tick(self.y0, self.log_y)}</text>\n',
        ]
        return "".join(lines)

    @staticmethod
    def _tick(value: float, log: bool) -> str:
        return f"1e{value:.1f}" if log else f"{value:.3g}"


def _sample_indices(n: int, count: int = MAX_POINTS) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, min(n, count)).round().astype(int))


def _log_sample_indices(nodes: np.ndarray, count: int = MAX_POINTS) -> np.ndarray:
    positive = nodes[nodes > 0]
    if positive.size == 0:
        return np.array([], dtype=int)
    targets = np.geomspace(positive[0], nodes[-1], count)
    return np.unique(np.searchsorted(nodes, targets).clip(0, nodes.size - 1))


def render_report(curve: SurvivalCurve, report: AsymptoticsReport) -> str:
    """
    レポート SVG を生成

    パネル1: Φ と Ψ（線形軸）
    パネル2: 両対数の Ψ（べき乗則領域では C∞·u^{−(γ−1)} の参照線）
    パネル3: 発散領域のみ Ψ/F̄ の診断系列

    Args:
        curve: 生存確率曲線
        report: 漸近解析の結果

    Returns:
        SVG 文字列
    """
    panels = 3 if report.regime == DIVERGENT else 2
    height = PANEL_HEIGHT * panels

    body = ""

    # Φ と Ψ
    idx = _sample_indices(curve.nodes.size)
    u = curve.nodes[idx]
    top = Panel(0, (0.0, curve.u_max), (0.0, 1.0))
    body += top.frame("survival and ruin probability", "u", "prob")
    body += top.polyline(u, curve.phi[idx], "phi", "phi")
    body += top.polyline(u, curve.psi[idx], "psi", "psi")

    # 両対数の Ψ
    idx = _log_sample_indices(curve.nodes)
    idx = idx[curve.psi[idx] > 0] if idx.size else idx
    if idx.size >= 2:
        u = curve.nodes[idx]
        psi = curve.psi[idx]
        y_lo, y_hi = float(psi.min()), float(psi.max())
        reference = None
        if report.regime != DIVERGENT and report.C_infinity:
            reference = report.C_infinity * u ** -(report.gamma - 1.0)
            y_lo = min(y_lo, float(reference.min()))
            y_hi = max(y_hi, float(reference.max()))
        loglog = Panel(PANEL_HEIGHT, (float(u[0]), float(u[-1])), (y_lo, y_hi), log_x=True, log_y=True)
        body += loglog.frame("ruin probability (log-log)", "u", "psi")
        body += loglog.polyline(u, psi, "psi", "psi-loglog")
        if reference is not None:
            body += loglog.polyline(u, reference, "asymptote", "asymptote")
    else:
        body += (f'  <text class="title" x="{fmt(MARGIN)}" y="{fmt(PANEL_HEIGHT + 14)}">'
                 f'ruin probability is identically 0</text>\n')

    # Ψ/F̄
    if report.regime == DIVERGENT:
        series = [(x, y) for x, y in report.subexp_ratio_series if y > 0]
        panel_top = 2 * PANEL_HEIGHT
        if len(series) >= 2:
            xs = [x for x, _ in series]
            ys = [y for _, y in series]
            ratio = Panel(panel_top, (min(xs), max(xs)), (min(ys), max(ys)), log_x=True)
            body += ratio.frame("psi / claim tail", "u", "ratio")
            body += ratio.polyline(xs, ys, "ratio", "subexp-ratio")
        else:
            body += (f'  <text id="subexp-ratio" class="title" x="{fmt(MARGIN)}" '
                     f'y="{fmt(panel_top + 14)}">psi / claim tail: not enough points</text>\n')

    return f"""<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">
  <style>
    .frame {{ fill: none; stroke: #2c3e50; stroke-width: 1; }}
    .title {{ font: bold 13px sans-serif; fill: #2c3e50; }}
    .label, .tick {{ font: 11px sans-serif; fill: #34495e; }}
    .phi {{ fill: none; stroke: #3498db; stroke-width: 1.5; }}
    .psi {{ fill: none; stroke: #e74c3c; stroke-width: 1.5; }}
    .asymptote {{ fill: none; stroke: #7f8c8d; stroke-width: 1; stroke-dasharray: 6 4; }}
    .ratio {{ fill: none; stroke: #8e44ad; stroke-width: 1.5; }}
  </style>
  <rect width="{WIDTH}" height="{height}" fill="white"/>
  <text class="label" x="{fmt(WIDTH - MARGIN)}" y="14" text-anchor="end">regime: {html.escape(report.regime)}</text>
{body}</svg>
"""


def summary_table(rows: List[Sequence[str]], header: Sequence[str]) -> str:
    """端末表示用の固定幅の表"""
    table = [list(header)] + [list(r) for r in rows]
    widths = [max(len(str(row[i])) for row in table) for i in range(len(header))]
    lines = []
    for k, row in enumerate(table):
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
