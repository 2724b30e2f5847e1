"""Minimal SVG line charts for the run artifacts (the CSV files are authoritative)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    path: str | Path,
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
    width: int = 560,
    height: int = 380,
) -> Path:
    """Write ``(label, x, y)`` series as polylines with markers and a legend."""
    path = Path(path)
    ml, mr, mt, mb = 64, 150, 34, 48

    def tx(v):
        return np.log10(v) if logx else np.asarray(v, dtype=float)

    def ty(v):
        return np.log10(v) if logy else np.asarray(v, dtype=float)

    clean = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logx:
            keep &= x > 0
        if logy:
            keep &= y > 0
        clean.append((label, tx(x[keep]), ty(y[keep])))
    xs = np.concatenate([c[1] for c in clean]) if clean else np.zeros(1)
    ys = np.concatenate([c[2] for c in clean]) if clean else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 - x0 < 1e-300:
        x0, x1 = x0 - 1, x1 + 1
    if y1 - y0 < 1e-300:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{ml}" y="20" font-size="14" font-family="sans-serif">{_esc(title)}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle" font-family="sans-serif">{_esc(xlabel)}</text>',
        f'<text x="14" y="{mt + ph / 2:.1f}" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {mt + ph / 2:.1f})" text-anchor="middle">{_esc(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" font-size="10" text-anchor="middle" font-family="sans-serif">{_tick(xv, logx)}</text>')
        out.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" font-size="10" text-anchor="end" font-family="sans-serif">{_tick(yv, logy)}</text>')
    for i, (label, x, y) in enumerate(clean):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        if len(x) > 1:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{pts}"/>')
        if len(x) <= 40:
            out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{color}"/>' for a, b in zip(x, y))
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{ly}" font-size="11" font-family="sans-serif">{_esc(label)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out))
    return path


def _tick(v: float, log: bool) -> str:
    return f"{10 ** v:.3g}" if log else f"{v:.3g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

