"""Static line charts written directly as SVG text."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

WIDTH, HEIGHT = 640, 360
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 36, 44


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


@dataclass
class Chart:
    title: str
    xlabel: str = "t [s]"
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    # horizontal reference lines: (label, value)
    hlines: list[tuple[str, float]] = field(default_factory=list)

    def add(self, label, x, y, dashed=False) -> "Chart":
        self.series.append(Series(label, np.asarray(x, float), np.asarray(y, float), dashed))
        return self

    def hline(self, label, value) -> "Chart":
        self.hlines.append((label, float(value)))
        return self

    def y_range(self) -> tuple[float, float]:
        vals = [s.y[np.isfinite(s.y)] for s in self.series]
        vals.append(np.array([v for _, v in self.hlines]))
        allv = np.concatenate([v for v in vals if v.size] or [np.zeros(1)])
        lo, hi = float(np.min(allv)), float(np.max(allv))
        if hi - lo < 1e-12:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 1e-9 * step, step)]


def _num(v: float) -> str:
    return f"{v:.4g}"


def render(chart: Chart) -> str:
    xs = [s.x for s in chart.series if s.x.size]
    x0 = float(min(x.min() for x in xs)) if xs else 0.0
    x1 = float(max(x.max() for x in xs)) if xs else 1.0
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    y0, y1 = chart.y_range()
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(chart.title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{sx(v):.1f}" y1="{TOP + ph}" x2="{sx(v):.1f}" y2="{TOP + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{sx(v):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{_num(v)}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 4}" y1="{sy(v):.1f}" x2="{LEFT + pw}" y2="{sy(v):.1f}" stroke="#eee"/>')
        out.append(f'<text x="{LEFT - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{_num(v)}</text>')
    out.append(
        f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{escape(chart.xlabel)}</text>'
    )
    if chart.ylabel:
        out.append(
            f'<text x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {TOP + ph / 2:.1f})">{escape(chart.ylabel)}</text>'
        )
    legend_y = TOP + 6
    for label, v in chart.hlines:
        out.append(
            f'<line class="ref" x1="{LEFT}" y1="{sy(v):.2f}" x2="{LEFT + pw}" y2="{sy(v):.2f}" '
            f'stroke="#888" stroke-dasharray="2,3" data-value="{v!r}"/>'
        )
        out.append(f'<text x="{LEFT + pw + 6}" y="{sy(v) + 4:.1f}" fill="#666">{escape(label)}</text>')
    for k, s in enumerate(chart.series):
        color = PALETTE[k % len(PALETTE)]
        keep = np.isfinite(s.y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(s.x[keep], s.y[keep]))
        dash = ' stroke-dasharray="6,3"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash} points="{pts}"/>')
        ly = legend_y + 16 * k
        out.append(f'<line x1="{LEFT + pw + 8}" y1="{ly}" x2="{LEFT + pw + 26}" y2="{ly}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{LEFT + pw + 30}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(chart: Chart, path) -> None:
    with open(path, "w") as fh:
        fh.write(render(chart))


def reference_values(svg_text: str) -> Sequence[float]:
    """Values of the reference lines drawn in a rendered chart."""
    return [float(v) for v in re.findall(r'class="ref"[^>]*data-value="([^"]+)"', svg_text)]
