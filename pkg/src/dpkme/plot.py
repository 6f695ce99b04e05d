"""Minimal SVG line charts of RKHS distance against the number of points."""

from __future__ import annotations

import math
from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["render_svg", "series_from_rows"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
DASHED = {"rff"}


def series_from_rows(rows) -> dict:
    """Mean finite ``delta_rkhs`` per M for each ``(algorithm, epsilon)``.

    Baselines do not depend on epsilon and are collapsed into one series.
    """
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if not math.isfinite(r.delta_rkhs):
            continue
        key = (r.algorithm, None if r.algorithm == "baseline" else float(r.epsilon))
        acc[key][int(r.m)].append(r.delta_rkhs)
    out = {}
    for key in sorted(acc, key=lambda k: (k[0], -1.0 if k[1] is None else k[1])):
        ms = sorted(acc[key])
        out[key] = [(m, float(np.mean(acc[key][m]))) for m in ms]
    return out


def _label(key) -> str:
    alg, eps = key
    return alg if eps is None else f"{alg}, eps={eps:g}"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(series: dict, title: str = "RKHS distance (lower is better)",
               xlabel: str = "M", ylabel: str = "RKHS distance") -> str:
    """Render ``{key: [(m, delta), ...]}`` as an SVG document with a log y-axis."""
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{LEFT + pw / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{TOP + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {TOP + ph / 2:.0f})">{escape(ylabel)}</text>',
    ]
    pts = [(m, d) for s in series.values() for m, d in s if d > 0]
    if pts:
        xs = [m for m, _ in pts]
        ys = [d for _, d in pts]
        xlo, xhi = min(xs), max(xs)
        if xlo == xhi:
            xlo, xhi = xlo - 1, xhi + 1
        ylo = math.floor(math.log10(min(ys)))
        yhi = math.ceil(math.log10(max(ys)))
        if ylo == yhi:
            yhi += 1

        def sx(m):
            return LEFT + (m - xlo) / (xhi - xlo) * pw

        def sy(d):
            return TOP + (yhi - math.log10(d)) / (yhi - ylo) * ph

        for e in range(ylo, yhi + 1):
            y = sy(10.0**e)
            parts.append(f'<line x1="{LEFT}" y1="{_fmt(y)}" x2="{LEFT + pw}" y2="{_fmt(y)}" '
                         f'stroke="#dddddd"/>')
            parts.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="11">1e{e}</text>')
        for m in sorted(set(xs)):
            x = sx(m)
            parts.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 16}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="11">{m:g}</text>')
        for i, (key, s) in enumerate(series.items()):
            color = PALETTE[i % len(PALETTE)]
            dash = ' stroke-dasharray="6 3"' if key[0] in DASHED else ""
            coords = [(sx(m), sy(d)) for m, d in s if d > 0]
            if len(coords) > 1:
                path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
                parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                             f'stroke-width="1.5"{dash}/>')
            for x, y in coords:
                parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}"/>')
            ly = TOP + 14 + 18 * i
            lx = LEFT + pw + 12
            parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                         f'stroke="{color}" stroke-width="1.5"{dash}/>')
            parts.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                         f'font-size="11">{escape(_label(key))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
