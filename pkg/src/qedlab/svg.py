"""Minimal self-contained SVG line plots."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


@dataclass
class Panel:
    title: str
    xlabel: str = "x"
    ylabel: str = "y"
    series: list = field(default_factory=list)
    markers: list = field(default_factory=list)

    def line(self, x, y, label=""):
        self.series.append((np.asarray(x, float), np.asarray(y, float), label))

    def points(self, x, y, label=""):
        self.markers.append((np.asarray(x, float), np.asarray(y, float), label))


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def _fmt(v):
    return f"{v:.3g}"


def render(panels: list[Panel], width_per_panel=360, height=280) -> str:
    """One row of panels; each panel gets its own axes."""
    W = width_per_panel * len(panels)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" '
           f'viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="10">',
           f'<rect width="{W}" height="{height}" fill="white"/>']
    for k, panel in enumerate(panels):
        out.extend(_panel(panel, k * width_per_panel, width_per_panel, height))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _panel(p: Panel, x_off, w, h):
    ml, mr, mt, mb = 48, 12, 24, 36
    pw, ph = w - ml - mr, h - mt - mb
    xs = [s[0] for s in p.series + p.markers if s[0].size]
    ys = [s[1] for s in p.series + p.markers if s[1].size]
    if xs:
        x_lo, x_hi = float(min(a.min() for a in xs)), float(max(a.max() for a in xs))
        y_lo, y_hi = float(min(a.min() for a in ys)), float(max(a.max() for a in ys))
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(v):
        return x_off + ml + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return mt + ph - (v - y_lo) / (y_hi - y_lo) * ph

    g = [f'<g class="panel">',
         f'<text x="{x_off + w / 2:.1f}" y="14" text-anchor="middle" font-size="12">'
         f'{escape(p.title)}</text>',
         f'<rect x="{x_off + ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in _ticks(x_lo, x_hi):
        g.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 14}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        g.append(f'<text x="{x_off + ml - 4}" y="{sy(t) + 3:.1f}" text-anchor="end">{_fmt(t)}</text>')
    g.append(f'<text x="{x_off + ml + pw / 2:.1f}" y="{h - 6}" text-anchor="middle">'
             f'{escape(p.xlabel)}</text>')
    g.append(f'<text x="{x_off + 12}" y="{mt + ph / 2:.1f}" text-anchor="middle" '
             f'transform="rotate(-90 {x_off + 12} {mt + ph / 2:.1f})">{escape(p.ylabel)}</text>')
    for i, (x, y, label) in enumerate(p.series):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        g.append(f'<polyline class="series" fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                 f'stroke-width="1.5" points="{pts}"><title>{escape(label)}</title></polyline>')
    for x, y, label in p.markers:
        for a, b in zip(x, y):
            g.append(f'<circle class="marker" cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3.5" '
                     f'fill="#d62728"><title>{escape(label)}</title></circle>')
    g.append("</g>")
    return g
