"""Minimal SVG line charts written as plain text (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PANEL_W, PANEL_H = 320, 220
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 48, 12, 28, 32


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [v for v in np.arange(start, hi + 0.5 * step, step) if lo - 1e-12 <= v <= hi + 1e-12]


def _fmt(v):
    return f"{v:.3g}"


def _panel(ox, oy, title, series, y_range):
    x_lo, x_hi = 0.0, 1.0
    y_lo, y_hi = y_range
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B

    def sx(x):
        return ox + MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return oy + MARGIN_T + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<rect x="{ox + MARGIN_L}" y="{oy + MARGIN_T}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
        f'<text x="{ox + MARGIN_L + pw / 2:.1f}" y="{oy + 18}" text-anchor="middle" '
        f'font-size="12">{escape(title)}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{sx(t):.2f}" y1="{oy + MARGIN_T + ph}" x2="{sx(t):.2f}" '
            f'y2="{oy + MARGIN_T + ph + 4}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{sx(t):.2f}" y="{oy + MARGIN_T + ph + 16}" text-anchor="middle" '
            f'font-size="10">{_fmt(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{ox + MARGIN_L - 4}" y1="{sy(t):.2f}" x2="{ox + MARGIN_L}" '
            f'y2="{sy(t):.2f}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{ox + MARGIN_L - 6}" y="{sy(t) + 3:.2f}" text-anchor="end" '
            f'font-size="10">{_fmt(t)}</text>'
        )
    for s in series:
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(s["x"], s["y"]))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{s.get("color", "#000")}" '
            f'stroke-width="{s.get("width", 1)}"/>'
        )
    return out


def density_grid_svg(rows, path=None):
    """Grid of density panels.

    ``rows`` is a list of rows, each a list of ``(title, series)`` where
    ``series`` is a list of dicts with ``x``, ``y``, optional ``color`` and
    ``width``.  All panels share one y-range.
    """
    ys = [np.asarray(s["y"]) for row in rows for _, series in row for s in series]
    y_lo = min(0.0, float(min(y.min() for y in ys)))
    y_hi = float(max(y.max() for y in ys)) * 1.05
    n_cols = max(len(r) for r in rows)
    width, height = n_cols * PANEL_W, len(rows) * PANEL_H
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for r, row in enumerate(rows):
        for c, (title, series) in enumerate(row):
            parts.extend(_panel(c * PANEL_W, r * PANEL_H, title, series, (y_lo, y_hi)))
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
