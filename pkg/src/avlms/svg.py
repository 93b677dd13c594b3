"""Self-contained log-log SVG plots, no plotting dependency.

Renders one polyline per series on decade-gridded log axes, a legend,
and dashed reference guides with slopes -1 and -2 for eyeballing the
convergence rates of risk curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
]


@dataclass
class Series:
    label: str
    xs: list
    ys: list


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def render_loglog_svg(series: list[Series], path: str, title: str = "",
                      xlabel: str = "n", ylabel: str = "excess risk") -> None:
    """Write a log-log plot of the positive points of each series."""
    pts = []
    for s in series:
        pts.extend((x, y) for x, y in zip(s.xs, s.ys) if x > 0 and y > 0 and math.isfinite(y))
    if pts:
        lx = [math.log10(p[0]) for p in pts]
        ly = [math.log10(p[1]) for p in pts]
        x_lo, x_hi = min(lx), max(lx)
        y_lo, y_hi = min(ly), max(ly)
        if x_hi - x_lo < 1e-9:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_hi - y_lo < 1e-9:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad_y = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(logx: float) -> float:
        return MARGIN_L + (logx - x_lo) / (x_hi - x_lo) * plot_w

    def py(logy: float) -> float:
        return MARGIN_T + (y_hi - logy) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH / 2}" y="{MARGIN_T - 10}" text-anchor="middle">{_esc(title)}</text>'
        )
    for k in _decades(x_lo, x_hi):
        if x_lo <= k <= x_hi:
            x = px(k)
            out.append(
                f'<line x1="{x:.1f}" y1="{MARGIN_T}" x2="{x:.1f}" '
                f'y2="{MARGIN_T + plot_h}" stroke="#dddddd"/>'
            )
            out.append(
                f'<text x="{x:.1f}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle">'
                f"1e{k}</text>"
            )
    for k in _decades(y_lo, y_hi):
        if y_lo <= k <= y_hi:
            y = py(k)
            out.append(
                f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{MARGIN_L + plot_w}" '
                f'y2="{y:.1f}" stroke="#dddddd"/>'
            )
            out.append(
                f'<text x="{MARGIN_L - 6}" y="{y + 4:.1f}" text-anchor="end">1e{k}</text>'
            )
    out.append(
        f'<text x="{MARGIN_L + plot_w / 2}" y="{HEIGHT - 12}" text-anchor="middle">'
        f"{_esc(xlabel)}</text>"
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2})">{_esc(ylabel)}</text>'
    )

    # reference slopes -1 and -2 anchored at the upper-right of the data box
    if pts:
        span = min(1.5, x_hi - x_lo)
        for slope, dash in ((-1, "6,3"), (-2, "2,3")):
            x0, x1 = x_hi - span, x_hi
            y1 = y_lo + 0.9 * (y_hi - y_lo)
            y0 = y1 - slope * span
            if y0 > y_hi:
                y0 = y_hi
                x0 = x1 - (y1 - y0) / slope
            out.append(
                f'<line x1="{px(x0):.1f}" y1="{py(y0):.1f}" x2="{px(x1):.1f}" '
                f'y2="{py(y1):.1f}" stroke="#555555" stroke-dasharray="{dash}"/>'
            )
            out.append(
                f'<text x="{px(x1) - 4:.1f}" y="{py(y1) - 4:.1f}" text-anchor="end" '
                f'fill="#555555">slope {slope}</text>'
            )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = [
            f"{px(math.log10(x)):.2f},{py(math.log10(y)):.2f}"
            for x, y in zip(s.xs, s.ys)
            if x > 0 and y > 0 and math.isfinite(y)
        ]
        if coords:
            out.append(
                f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
                'stroke-width="1.5"/>'
            )
        ly = MARGIN_T + 16 + 16 * i
        out.append(
            f'<line x1="{MARGIN_L + 8}" y1="{ly - 4}" x2="{MARGIN_L + 28}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(f'<text x="{MARGIN_L + 33}" y="{ly}">{_esc(s.label)}</text>')

    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
