"""Minimal deterministic SVG line charts (actual-vs-predicted overlays etc.).

No plotting dependency: the chart is assembled as a plain SVG 1.1 string with
fixed float formatting, so identical input yields identical bytes.
"""

from __future__ import annotations

from datetime import date
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["render_svg"]

_WIDTH = 960
_HEIGHT = 540
_MARGIN_LEFT = 70
_MARGIN_RIGHT = 30
_MARGIN_TOP = 50
_MARGIN_BOTTOM = 50
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
            "#e377c2", "#17becf")


def _axis_value(ts) -> float:
    if isinstance(ts, date):
        return float(ts.toordinal())
    return float(ts)


def _axis_label(ts) -> str:
    if isinstance(ts, date):
        return ts.isoformat()
    if float(ts) == int(ts):
        return str(int(ts))
    return f"{float(ts):.2f}"


def render_svg(series: dict, title: str = "") -> str:
    """Render named (timestamps, values) pairs as one overlaid line chart.

    Timestamps may be calendar dates or plain numbers (e.g. forecast steps);
    all series share one axis domain.  Axes span the data with 5% padding,
    every series gets its own stroke colour and a legend entry.
    """
    if not series:
        raise ValueError("render_svg: no series to plot")
    prepared = []
    for name, (ts, vals) in series.items():
        xs = np.array([_axis_value(t) for t in ts], dtype=float)
        ys = np.asarray(vals, dtype=float).ravel()
        if xs.size == 0 or ys.size == 0:
            raise ValueError(f"render_svg: series {name!r} is empty")
        if xs.shape != ys.shape:
            raise ValueError(f"render_svg: series {name!r} has mismatched lengths")
        prepared.append((str(name), ts, xs, ys))

    x_lo = min(float(xs.min()) for _, _, xs, _ in prepared)
    x_hi = max(float(xs.max()) for _, _, xs, _ in prepared)
    y_lo = min(float(ys.min()) for _, _, _, ys in prepared)
    y_hi = max(float(ys.max()) for _, _, _, ys in prepared)
    x_pad = (x_hi - x_lo) * 0.05 or 0.5
    y_pad = (y_hi - y_lo) * 0.05 or 0.5
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = _WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = _HEIGHT - _MARGIN_TOP - _MARGIN_BOTTOM

    def px(x: float) -> float:
        return _MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.2f}" y="28" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{escape(title)}</text>'
        )

    # frame and ticks
    parts.append(
        f'<rect x="{_MARGIN_LEFT}" y="{_MARGIN_TOP}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    reference = prepared[0][1]
    for k in range(5):
        frac = k / 4.0
        xv = x_lo + frac * (x_hi - x_lo)
        xp = px(xv)
        parts.append(
            f'<line x1="{xp:.2f}" y1="{_MARGIN_TOP + plot_h}" x2="{xp:.2f}" '
            f'y2="{_MARGIN_TOP + plot_h + 5}" stroke="#333333"/>'
        )
        idx = min(int(round(frac * (len(reference) - 1))), len(reference) - 1)
        label = _axis_label(reference[idx]) if len(reference) else f"{xv:.1f}"
        parts.append(
            f'<text x="{xp:.2f}" y="{_MARGIN_TOP + plot_h + 20}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{escape(label)}</text>"
        )
    for k in range(6):
        yv = y_lo + k / 5.0 * (y_hi - y_lo)
        yp = py(yv)
        parts.append(
            f'<line x1="{_MARGIN_LEFT - 5}" y1="{yp:.2f}" x2="{_MARGIN_LEFT}" '
            f'y2="{yp:.2f}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_LEFT - 10}" y="{yp + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yv:.2f}</text>'
        )

    for idx, (name, _, xs, ys) in enumerate(prepared):
        colour = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{colour}" '
            f'stroke-width="1.5"/>'
        )
        ly = _MARGIN_TOP + 14 + 18 * idx
        lx = _WIDTH - _MARGIN_RIGHT - 150
        parts.append(
            f'<rect x="{lx}" y="{ly - 9}" width="12" height="12" fill="{colour}"/>'
        )
        parts.append(
            f'<text x="{lx + 18}" y="{ly + 2}" font-family="sans-serif" '
            f'font-size="12">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
