"""Minimal deterministic SVG line charts."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_chart"]

WIDTH, HEIGHT = 960, 720
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 90, 40, 60, 80
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
DASHES = ("", "6,4")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [float(k) for k in range(math.floor(lo), math.ceil(hi) + 1)]
    span = hi - lo
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int(math.floor((hi - start) / step + 1e-9)) + 1)]


def _label(v: float, log: bool) -> str:
    if log:
        return f"2^{int(round(v))}"
    return f"{v:.6g}"


def line_chart(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
) -> str:
    """
    Render ``(label, xs, ys)`` series as one SVG document.

    Log axes are base 2 and require strictly positive data. Identical input
    always produces identical bytes.
    """
    if not series:
        raise ValueError("nothing to plot")
    prepared = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size == 0:
            raise ValueError(f"series {label!r} has mismatched or empty data")
        if logx and np.any(xs <= 0):
            raise ValueError(f"series {label!r} has nonpositive x values on a log axis")
        if logy and np.any(ys <= 0):
            raise ValueError(f"series {label!r} has nonpositive y values on a log axis")
        prepared.append((label, np.log2(xs) if logx else xs, np.log2(ys) if logy else ys))

    xmin = min(p[1].min() for p in prepared)
    xmax = max(p[1].max() for p in prepared)
    ymin = min(p[2].min() for p in prepared)
    ymax = max(p[2].max() for p in prepared)
    if xmax == xmin:
        xmin, xmax = xmin - 1, xmax + 1
    if ymax == ymin:
        ymin, ymax = ymin - 1, ymax + 1
    pad = 0.04 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B
    sx = lambda v: MARGIN_L + (v - xmin) / (xmax - xmin) * pw
    sy = lambda v: MARGIN_T + (ymax - v) / (ymax - ymin) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12pt">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(xmin, xmax, logx):
        if xmin <= t <= xmax:
            x = sx(t)
            out.append(f'<line x1="{x:.2f}" y1="{MARGIN_T + ph}" x2="{x:.2f}" y2="{MARGIN_T + ph + 6}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{MARGIN_T + ph + 24}" text-anchor="middle">{escape(_label(t, logx))}</text>')
    for t in _ticks(ymin, ymax, logy):
        if ymin <= t <= ymax:
            y = sy(t)
            out.append(f'<line x1="{MARGIN_L - 6}" y1="{y:.2f}" x2="{MARGIN_L}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{MARGIN_L - 10}" y="{y + 5:.2f}" text-anchor="end">{escape(_label(t, logy))}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="{MARGIN_T / 2 + 6:.2f}" text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN_L + pw / 2:.2f}" y="{HEIGHT - 20}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="20" y="{MARGIN_T + ph / 2:.2f}" text-anchor="middle" '
            f'transform="rotate(-90 20 {MARGIN_T + ph / 2:.2f})">{escape(ylabel)}</text>'
        )

    for k, (label, xs, ys) in enumerate(prepared):
        # consecutive series come in pairs sharing a colour: solid then dashed
        color = PALETTE[(k // 2) % len(PALETTE)]
        dash = DASHES[k % 2]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        style = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{style} points="{pts}"/>')
        ly = MARGIN_T + 20 + 20 * k
        lx = MARGIN_L + pw - 160
        out.append(f'<line x1="{lx}" y1="{ly - 5}" x2="{lx + 30}" y2="{ly - 5}" stroke="{color}" stroke-width="2"{style}/>')
        out.append(f'<text x="{lx + 38}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
