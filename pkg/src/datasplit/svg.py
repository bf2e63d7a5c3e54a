"""Minimal self-contained SVG line charts with a log-scale x axis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass(frozen=True)
class ChartSpec:
    """Which columns to draw.

    ``group_by`` splits the rows into one series per distinct value; ``band``
    names the low/high columns of a shaded interval around each series.
    """

    x: str
    y: Sequence[str]
    group_by: str | None = None
    band: tuple[str, str] | None = None
    title: str = ""
    y_label: str = ""
    log_x: bool = True
    width: int = 720
    height: int = 440
    margin: tuple[int, int, int, int] = field(default=(40, 160, 50, 70))  # top right bottom left


@dataclass
class _Series:
    label: str
    xs: list[float]
    ys: list[float]
    lo: list[float] | None = None
    hi: list[float] | None = None


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def _collect(rows: Sequence[Mapping], spec: ChartSpec) -> list[_Series]:
    groups: dict[str, list[Mapping]] = {}
    for r in rows:
        key = str(r[spec.group_by]) if spec.group_by else ""
        groups.setdefault(key, []).append(r)
    series = []
    for key, grp in groups.items():
        for ycol in spec.y:
            pts = [(_num(r[spec.x]), _num(r[ycol]), r) for r in grp]
            pts = [p for p in pts if math.isfinite(p[0]) and math.isfinite(p[1])]
            label = f"{spec.group_by}={key}" if spec.group_by else ycol
            if spec.group_by and len(spec.y) > 1:
                label = f"{ycol} {label}"
            s = _Series(label, [p[0] for p in pts], [p[1] for p in pts])
            if spec.band:
                s.lo = [_num(p[2][spec.band[0]]) for p in pts]
                s.hi = [_num(p[2][spec.band[1]]) for p in pts]
            series.append(s)
    return series


def render_svg(rows: Sequence[Mapping], spec: ChartSpec) -> str:
    """Line chart of ``spec.y`` against ``spec.x``; raises on empty or unordered input."""
    if len(rows) < 2:
        raise ValueError("need at least two rows to draw a line")
    series = _collect(rows, spec)
    for s in series:
        if len(s.xs) < 2:
            raise ValueError(f"series {s.label!r} has fewer than two finite points")
        if any(b <= a for a, b in zip(s.xs, s.xs[1:])):
            raise ValueError(f"x values of series {s.label!r} are not strictly increasing")
        if spec.log_x and s.xs[0] <= 0:
            raise ValueError("log-scale x axis needs positive x values")

    tx = (lambda v: math.log10(v)) if spec.log_x else (lambda v: v)
    all_x = [tx(v) for s in series for v in s.xs]
    all_y = [v for s in series for v in s.ys]
    for s in series:
        if s.lo is not None:
            all_y += [v for v in (*s.lo, *s.hi) if math.isfinite(v)]
    x0, x1 = min(all_x), max(all_x)
    y0, y1 = min(all_y), max(all_y)
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    top, right, bottom, left = spec.margin
    pw, ph = spec.width - left - right, spec.height - top - bottom

    def px(v: float) -> float:
        return left + (tx(v) - x0) / (x1 - x0) * pw

    def py(v: float) -> float:
        v = min(max(v, y0), y1)
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="#444"/>',
    ]
    if spec.title:
        out.append(f'<text x="{spec.width / 2:.1f}" y="{top / 2 + 6:.1f}" text-anchor="middle" font-size="14">{escape(spec.title)}</text>')
    # x ticks at integer decades (log) or 6 even steps
    ticks = range(math.ceil(x0), math.floor(x1) + 1) if spec.log_x else [x0 + i * (x1 - x0) / 5 for i in range(6)]
    for t in ticks:
        xv = 10.0**t if spec.log_x else t
        x = px(xv)
        label = f"1e{t}" if spec.log_x else f"{t:.3g}"
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">{label}</text>')
    for i in range(6):
        yv = y0 + i * (y1 - y0) / 5
        y = py(yv)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{spec.height - 10}" text-anchor="middle">{escape(spec.x)}</text>')
    if spec.y_label:
        out.append(
            f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(spec.y_label)}</text>'
        )

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        if s.lo is not None:
            upper = [f"{px(x):.2f},{py(v):.2f}" for x, v in zip(s.xs, s.hi) if math.isfinite(v)]
            lower = [f"{px(x):.2f},{py(v):.2f}" for x, v in zip(s.xs, s.lo) if math.isfinite(v)]
            if upper and lower:
                pts = " ".join(upper + lower[::-1])
                out.append(f'<polygon class="band" points="{pts}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 32}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
