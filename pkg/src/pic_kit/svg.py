"""Minimal SVG scatter plot for factoring planes (no plotting dependencies)."""

from __future__ import annotations

from html import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = 70


def _ticks(lo, hi, k=5):
    return np.linspace(lo, hi, k)


def scatter_svg(
    groups,
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> str:
    """Render ``groups`` as an 800x600 scatter plot.

    ``groups`` is a list of ``(name, points, labels, color, marker)`` where
    ``points`` is ``k x 2`` and ``marker`` is ``"circle"`` or ``"square"``.
    """
    pts = np.vstack([np.asarray(g[1], dtype=float).reshape(-1, 2) for g in groups])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    span = hi - lo

    def sx(v):
        return MARGIN + (v - lo[0]) / span[0] * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - lo[1]) / span[1] * (HEIGHT - 2 * MARGIN)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
    ]
    # dashed zero lines mark where the two variables are uncorrelated
    if lo[0] < 0 < hi[0]:
        x0 = sx(0.0)
        out.append(f'<line x1="{x0:.2f}" y1="{MARGIN}" x2="{x0:.2f}" y2="{HEIGHT - MARGIN}" '
                   'stroke="gray" stroke-dasharray="4,4"/>')
    if lo[1] < 0 < hi[1]:
        y0 = sy(0.0)
        out.append(f'<line x1="{MARGIN}" y1="{y0:.2f}" x2="{WIDTH - MARGIN}" y2="{y0:.2f}" '
                   'stroke="gray" stroke-dasharray="4,4"/>')
    for t in _ticks(lo[0], hi[0]):
        out.append(f'<text x="{sx(t):.2f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(lo[1], hi[1]):
        out.append(f'<text x="{MARGIN - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 20}" text-anchor="middle" font-size="14">'
               f"{escape(xlabel)}</text>")
    out.append(f'<text x="20" y="{HEIGHT / 2}" text-anchor="middle" font-size="14" '
               f'transform="rotate(-90 20 {HEIGHT / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="30" text-anchor="middle" font-size="16">'
                   f"{escape(title)}</text>")

    for gi, (name, points, labels, color, marker) in enumerate(groups):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out.append(f'<g class="{escape(name)}" fill="{color}">')
        for (px, py), lab in zip(points, labels):
            cx, cy = sx(px), sy(py)
            if marker == "square":
                out.append(f'<rect x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8"/>')
            else:
                out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4"/>')
            out.append(f'<text x="{cx + 6:.2f}" y="{cy - 6:.2f}" fill="black">{escape(str(lab))}</text>')
        out.append("</g>")
        ly = MARGIN + 16 * gi + 12
        out.append(f'<text x="{WIDTH - MARGIN - 6}" y="{ly}" text-anchor="end" fill="{color}">'
                   f"{escape(name)}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
