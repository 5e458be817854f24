"""Hand-emitted SVG charts: a polyline curve and a bar histogram.

No plotting dependency on purpose: the output is a pure function of the
input data, byte for byte, which makes golden-file tests possible. Numbers
are formatted with repr-stable %.6g so the files stay identical across
runs and platforms with IEEE doubles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "Histogram", "emit_svg", "render_series", "render_histogram"]

WIDTH = 640
HEIGHT = 400
MARGIN_L = 70
MARGIN_R = 20
MARGIN_T = 40
MARGIN_B = 50


@dataclass
class Series:
    xs: list
    ys: list
    title: str = ""
    x_label: str = "x"
    y_label: str = "y"


@dataclass
class Histogram:
    values: list
    title: str = ""
    x_label: str = "bin"
    y_label: str = "count"


def _fmt(v: float) -> str:
    return f"{float(v):.6g}"


def _check_finite(vals, what):
    arr = np.asarray(vals, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"empty {what}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite value in {what}")
    return arr


def _scale(vals, lo, hi, out_lo, out_hi):
    if hi == lo:  # degenerate range: center the points
        return np.full(len(vals), 0.5 * (out_lo + out_hi))
    return out_lo + (np.asarray(vals, dtype=np.float64) - lo) / (hi - lo) * (out_hi - out_lo)


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _frame(title, x_label, y_label, x_lo, x_hi, y_lo, y_hi):
    """Common chrome: background, axes, tick labels, titles."""
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black" stroke-width="1"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black" stroke-width="1"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{_esc(title)}</text>',
        f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_esc(x_label)}</text>',
        f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(y0 + y1) // 2})">{_esc(y_label)}</text>',
        f'<text x="{x0 - 6}" y="{y0 + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_fmt(y_lo)}</text>',
        f'<text x="{x0 - 6}" y="{y1 + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_fmt(y_hi)}</text>',
        f'<text x="{x0}" y="{y0 + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{_fmt(x_lo)}</text>',
        f'<text x="{x1}" y="{y0 + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{_fmt(x_hi)}</text>',
    ]
    return parts


def render_series(series: Series) -> str:
    xs = _check_finite(series.xs, "series xs")
    ys = _check_finite(series.ys, "series ys")
    if xs.size != ys.size:
        raise ValueError(f"series length mismatch: {xs.size} xs vs {ys.size} ys")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    px = _scale(xs, x_lo, x_hi, MARGIN_L, WIDTH - MARGIN_R)
    py = _scale(ys, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T)
    points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
    parts = _frame(series.title, series.x_label, series.y_label, x_lo, x_hi, y_lo, y_hi)
    parts.append(f'<polyline points="{points}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_histogram(hist: Histogram) -> str:
    vals = _check_finite(hist.values, "histogram values")
    if np.any(vals < 0):
        raise ValueError("histogram values must be nonnegative")
    k = vals.size
    y_hi = float(vals.max()) if vals.max() > 0 else 1.0
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y_base = HEIGHT - MARGIN_B
    slot = (x1 - x0) / k
    bar_w = slot * 0.8
    parts = _frame(hist.title, hist.x_label, hist.y_label, 0, k - 1 if k > 1 else 0, 0.0, y_hi)
    for i, v in enumerate(vals):
        h = (float(v) / y_hi) * (y_base - MARGIN_T)
        bx = x0 + i * slot + slot * 0.1
        parts.append(f'<rect x="{_fmt(bx)}" y="{_fmt(y_base - h)}" '
                     f'width="{_fmt(bar_w)}" height="{_fmt(h)}" fill="#d1822b"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(data, path: str) -> None:
    """Write a Series or Histogram as a standalone SVG file."""
    if isinstance(data, Series):
        text = render_series(data)
    elif isinstance(data, Histogram):
        text = render_histogram(data)
    else:
        raise TypeError(f"expected Series or Histogram, got {type(data).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
