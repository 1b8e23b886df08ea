"""Minimal dependency-free SVG line plots and histograms for run reports."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot", "histogram"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 44
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m for m in (1, 2, 5, 10) if m * mag >= raw), default=10) * mag
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def _fmt(v: float) -> str:
    return f"{v:.3g}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W/2}" y="16" text-anchor="middle" font-size="13">{title}</text>',
            f'<text x="{_W/2}" y="{_H-8}" text-anchor="middle">{xlabel}</text>',
            f'<text x="14" y="{_H/2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {_H/2})">{ylabel}</text>',
            f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" height="{_H-_MT-_MB}" '
            f'fill="none" stroke="#333"/>',
        ]

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.parts))


def _scaler(lo, hi, a, b, log=False):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    span = (hi - lo) or 1.0

    def f(v):
        u = math.log10(v) if log else v
        return a + (u - lo) / span * (b - a)

    return f, lo, hi


def line_plot(path: str, xs, series: dict, *, title: str = "", xlabel: str = "",
              ylabel: str = "", logy: bool = False, markers: bool = False) -> None:
    """Polyline plot of one or more named series over a shared x axis."""
    xs = np.asarray(xs, dtype=float)
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    if logy:
        ys_all = ys_all[ys_all > 0]
        if ys_all.size == 0:
            raise ValueError("log-scale plot needs positive values")
    sx, xlo, xhi = _scaler(float(xs.min()), float(xs.max()), _ML, _W - _MR)
    sy, ylo, yhi = _scaler(float(ys_all.min()), float(ys_all.max()),
                           _H - _MB, _MT, log=logy)
    cv = _Canvas(title, xlabel, ylabel)
    for tv in _ticks(xlo, xhi):
        px = _ML + (tv - xlo) / ((xhi - xlo) or 1) * (_W - _ML - _MR)
        cv.parts.append(f'<line x1="{px:.1f}" y1="{_H-_MB}" x2="{px:.1f}" '
                        f'y2="{_H-_MB+4}" stroke="#333"/>')
        cv.parts.append(f'<text x="{px:.1f}" y="{_H-_MB+16}" text-anchor="middle">'
                        f'{_fmt(tv)}</text>')
    for tv in _ticks(ylo, yhi):
        py = (_H - _MB) + (tv - ylo) / ((yhi - ylo) or 1) * (_MT - (_H - _MB))
        label = _fmt(10 ** tv) if logy else _fmt(tv)
        cv.parts.append(f'<line x1="{_ML-4}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" '
                        f'stroke="#333"/>')
        cv.parts.append(f'<text x="{_ML-6}" y="{py+3:.1f}" text-anchor="end">{label}</text>')
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        color = _COLORS[i % len(_COLORS)]
        pts = [(sx(x), sy(y)) for x, y in zip(xs, ys) if not logy or y > 0]
        if not pts:
            continue
        poly = " ".join(f"{px:.1f},{py:.1f}" for px, py in pts)
        cv.parts.append(f'<polyline points="{poly}" fill="none" stroke="{color}" '
                        f'stroke-width="1.4"/>')
        if markers:
            for px, py in pts:
                cv.parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="2.4" '
                                f'fill="{color}"/>')
        cv.parts.append(f'<text x="{_W-_MR-6}" y="{_MT+14+13*i}" text-anchor="end" '
                        f'fill="{color}">{name}</text>')
    cv.save(path)


def histogram(path: str, values, bins: int = 30, *, title: str = "",
              xlabel: str = "", ylabel: str = "count") -> None:
    """Bar histogram of a sample."""
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    sx, xlo, xhi = _scaler(float(edges[0]), float(edges[-1]), _ML, _W - _MR)
    sy, _, _ = _scaler(0.0, float(max(counts.max(), 1)), _H - _MB, _MT)
    cv = _Canvas(title, xlabel, ylabel)
    for tv in _ticks(xlo, xhi):
        px = sx(tv)
        cv.parts.append(f'<text x="{px:.1f}" y="{_H-_MB+16}" text-anchor="middle">'
                        f'{_fmt(tv)}</text>')
    for tv in _ticks(0, float(counts.max() or 1)):
        py = sy(tv)
        cv.parts.append(f'<text x="{_ML-6}" y="{py+3:.1f}" text-anchor="end">{_fmt(tv)}</text>')
    y0 = sy(0.0)
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        x0, x1 = sx(e0), sx(e1)
        yt = sy(float(c))
        cv.parts.append(f'<rect x="{x0:.1f}" y="{yt:.1f}" width="{max(x1-x0-0.5, 0.5):.1f}" '
                        f'height="{max(y0-yt, 0):.1f}" fill="#1f77b4" stroke="none"/>')
    cv.save(path)
