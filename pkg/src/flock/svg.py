"""Minimal native SVG line charts; the output bytes are a pure function of the inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
MAX_POINTS = 1500


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


@dataclass(frozen=True)
class Panel:
    title: str
    series: Sequence[Series]
    xlabel: str = ""
    ylabel: str = ""
    log_y: bool = False
    equal_aspect: bool = False


def _num(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1e4 or abs(x) < 1e-2:
        return f"{x:.1e}"
    return f"{x:.4g}"


def _decimate(x, y):
    step = max(1, math.ceil(len(x) / MAX_POINTS))
    idx = np.arange(0, len(x), step)
    if idx[-1] != len(x) - 1:
        idx = np.append(idx, len(x) - 1)
    return x[idx], y[idx]


def _nice_range(lo: float, hi: float):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return 0.0, 1.0
    if hi <= lo:
        pad = max(abs(lo) * 0.05, 1e-12)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _panel(p: Panel, width: int, height: int) -> list[str]:
    left, right, top, bottom = 70, 130, 28, 40
    w = width - left - right
    h = height - top - bottom
    prepared = []
    for s in p.series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if p.log_y:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        keep = np.isfinite(x) & np.isfinite(y)
        x, y = x[keep], y[keep]
        if x.size:
            x, y = _decimate(x, y)
        prepared.append((s, x, y))
    xs = [x for _, x, _ in prepared if x.size]
    ys = [y for _, _, y in prepared if y.size]
    x0, x1 = _nice_range(min(a.min() for a in xs), max(a.max() for a in xs)) if xs else (0.0, 1.0)
    y0, y1 = _nice_range(min(a.min() for a in ys), max(a.max() for a in ys)) if ys else (0.0, 1.0)
    if p.equal_aspect:
        sx, sy = (x1 - x0) / w, (y1 - y0) / h
        if sx > sy:
            c = 0.5 * (y0 + y1)
            y0, y1 = c - 0.5 * sx * h, c + 0.5 * sx * h
        else:
            c = 0.5 * (x0 + x1)
            x0, x1 = c - 0.5 * sy * w, c + 0.5 * sy * w

    def px(v):
        return left + (v - x0) / (x1 - x0) * w

    def py(v):
        return top + h - (v - y0) / (y1 - y0) * h

    out = [
        f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#444"/>',
        f'<text x="{left + w / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(p.title)}</text>',
        f'<text x="{left + w / 2:.1f}" y="{height - 6}" text-anchor="middle" font-size="11">{escape(p.xlabel)}</text>',
        f'<text x="14" y="{top + h / 2:.1f}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {top + h / 2:.1f})">{escape(p.ylabel)}</text>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        ylab = _tick(10**fy) if p.log_y else _tick(fy)
        out.append(f'<text x="{_num(px(fx))}" y="{top + h + 14}" text-anchor="middle" font-size="10">{_tick(fx)}</text>')
        out.append(f'<text x="{left - 4}" y="{_num(py(fy) + 3)}" text-anchor="end" font-size="10">{ylab}</text>')
    for k, (s, x, y) in enumerate(prepared):
        color = PALETTE[k % len(PALETTE)]
        if x.size:
            pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, y))
            dash = ' stroke-dasharray="5,3"' if s.dashed else ""
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{pts}"/>')
        ly = top + 12 + 14 * k
        out.append(f'<line x1="{left + w + 8}" y1="{ly - 4}" x2="{left + w + 24}" y2="{ly - 4}" stroke="{color}"/>')
        out.append(f'<text x="{left + w + 28}" y="{ly}" font-size="10">{escape(s.label)}</text>')
    return out


def render(panels: Sequence[Panel], width: int = 720, panel_height: int = 300) -> str:
    """Stack ``panels`` vertically into one SVG document."""
    height = panel_height * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for k, p in enumerate(panels):
        parts.append(f'<g transform="translate(0,{k * panel_height})">')
        parts.extend(_panel(p, width, panel_height))
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(series: Sequence[Series], title: str = "", xlabel: str = "", ylabel: str = "",
               log_y: bool = False, width: int = 720, height: int = 300) -> str:
    return render([Panel(title, series, xlabel, ylabel, log_y)], width, height)
