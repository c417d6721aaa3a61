"""Standalone SVG line charts with deterministic output."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _range(values):
    finite = [v[np.isfinite(v)] for v in values]
    finite = [v for v in finite if v.size]
    if not finite:
        return 0.0, 1.0
    lo = min(float(v.min()) for v in finite)
    hi = max(float(v.max()) for v in finite)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _panel(x, series: dict, left, top, width, height, title, xlabel, ylabel):
    parts = []
    xs = np.asarray(x, dtype=np.float64)
    x_lo, x_hi = _range([xs])
    y_lo, y_hi = _range([np.asarray(v, dtype=np.float64) for v in series.values()])
    parts.append(f'<rect x="{left}" y="{top}" width="{width}" height="{height}" '
                 f'fill="none" stroke="#333" stroke-width="1"/>')
    parts.append(f'<text x="{left + width / 2:.1f}" y="{top - 8}" text-anchor="middle" '
                 f'font-size="13">{escape(title)}</text>')
    parts.append(f'<text x="{left + width / 2:.1f}" y="{top + height + 30}" text-anchor="middle" '
                 f'font-size="11">{escape(xlabel)}</text>')
    parts.append(f'<text x="{left - 45}" y="{top + height / 2:.1f}" text-anchor="middle" font-size="11" '
                 f'transform="rotate(-90 {left - 45} {top + height / 2:.1f})">{escape(ylabel)}</text>')
    for frac in (0.0, 0.5, 1.0):
        yv = y_lo + frac * (y_hi - y_lo)
        py = top + height - frac * height
        parts.append(f'<text x="{left - 4}" y="{py + 4:.1f}" text-anchor="end" font-size="9">{yv:.3g}</text>')
        xv = x_lo + frac * (x_hi - x_lo)
        px = left + frac * width
        parts.append(f'<text x="{px:.1f}" y="{top + height + 14}" text-anchor="middle" font-size="9">{xv:.6g}</text>')
    for i, (name, values) in enumerate(series.items()):
        ys = np.asarray(values, dtype=np.float64)
        ok = np.isfinite(ys) & np.isfinite(xs)
        px = left + (xs[ok] - x_lo) / (x_hi - x_lo) * width
        py = top + height - (ys[ok] - y_lo) / (y_hi - y_lo) * height
        points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{points}">'
                     f'<title>{escape(name)}</title></polyline>')
        parts.append(f'<text x="{left + width - 4}" y="{top + 14 + 12 * i}" text-anchor="end" '
                     f'font-size="10" fill="{color}">{escape(name)}</text>')
    return parts


def line_chart(x, series: dict, title="", xlabel="", ylabel="", width=900, height=360) -> str:
    """One panel; one polyline per entry of ``series``. NaN points are skipped."""
    return panel_chart(x, [(title, series, ylabel)], xlabel=xlabel, width=width, panel_height=height - 90)


def panel_chart(x, panels, xlabel="", width=900, panel_height=160) -> str:
    """Vertically stacked panels sharing the x axis.

    ``panels`` is a list of ``(title, {name: values}, ylabel)``.
    """
    left, right, top_pad, gap = 70, 20, 30, 60
    total = top_pad + len(panels) * (panel_height + gap)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total}" '
             f'viewBox="0 0 {width} {total}">',
             f'<rect width="{width}" height="{total}" fill="white"/>']
    for i, (title, series, ylabel) in enumerate(panels):
        top = top_pad + i * (panel_height + gap)
        parts.extend(_panel(x, series, left, top, width - left - right, panel_height,
                            title, xlabel, ylabel))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)


def finite_or_blank(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))
