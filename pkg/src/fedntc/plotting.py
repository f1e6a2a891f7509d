"""Rate-distortion figures as standalone SVG, no plotting dependencies.

Rates are plotted in bits per dimension against per-entry MSE so measured
points and analytic curves share axes. Every figure ships with a CSV
mirror of exactly the plotted points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .oracle import RdCurve

WIDTH, HEIGHT = 640, 460
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 20, 40, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class RdSeries:
    label: str
    distortions: np.ndarray
    rates: np.ndarray  # bits per dimension


def _ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / (n - 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 0.5, step)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_rd_svg(
    series: list[RdSeries], oracle: RdCurve | None = None, title: str = "rate vs distortion"
) -> str:
    """One SVG figure: solid marker series per regime, dashed oracle overlay."""
    if not series and oracle is None:
        raise ConfigError("nothing to plot")
    xs, ys = [], []
    for s in series:
        xs.extend(np.asarray(s.distortions, dtype=float))
        ys.extend(np.asarray(s.rates, dtype=float))
    if oracle is not None:
        xs.extend(np.asarray(oracle.distortions, dtype=float))
        ys.extend(np.asarray(oracle.rates, dtype=float))
    x_lo, x_hi = float(min(xs)), float(max(xs))
    y_lo, y_hi = float(min(ys)), float(max(ys))
    x_pad = 0.05 * (x_hi - x_lo or 1.0)
    y_pad = 0.05 * (y_hi - y_lo or 1.0)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo = min(y_lo - y_pad, 0.0)
    y_hi = y_hi + y_pad
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        if not x_lo <= tx <= x_hi:
            continue
        out.append(
            f'<line x1="{px(tx):.1f}" y1="{MARGIN_T + plot_h}" x2="{px(tx):.1f}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{px(tx):.1f}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        if not y_lo <= ty <= y_hi:
            continue
        out.append(
            f'<line x1="{MARGIN_L - 5}" y1="{py(ty):.1f}" x2="{MARGIN_L}" '
            f'y2="{py(ty):.1f}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{py(ty) + 4:.1f}" text-anchor="end" '
            f'font-size="11">{_fmt(ty)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + plot_w / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-size="12">distortion (MSE)</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2})">rate (bits/dim)</text>'
    )
    legend_y = MARGIN_T + 14
    if oracle is not None:
        order = np.argsort(oracle.distortions)
        pts = " ".join(
            f"{px(float(oracle.distortions[i])):.1f},{py(float(oracle.rates[i])):.1f}"
            for i in order
        )
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="#555" stroke-width="1.5" '
            f'stroke-dasharray="6 4"/>'
        )
        out.append(
            f'<line x1="{WIDTH - MARGIN_R - 150}" y1="{legend_y}" '
            f'x2="{WIDTH - MARGIN_R - 120}" y2="{legend_y}" stroke="#555" '
            f'stroke-width="1.5" stroke-dasharray="6 4"/>'
        )
        out.append(
            f'<text x="{WIDTH - MARGIN_R - 114}" y="{legend_y + 4}" font-size="11">'
            f"{oracle.label or 'oracle'}</text>"
        )
        legend_y += 16
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        order = np.argsort(s.distortions)
        d_sorted = np.asarray(s.distortions, dtype=float)[order]
        r_sorted = np.asarray(s.rates, dtype=float)[order]
        if len(d_sorted) > 1:
            pts = " ".join(
                f"{px(d):.1f},{py(r):.1f}" for d, r in zip(d_sorted, r_sorted)
            )
            out.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"/>'
            )
        for d, r in zip(d_sorted, r_sorted):
            out.append(f'<circle cx="{px(d):.1f}" cy="{py(r):.1f}" r="3.5" fill="{color}"/>')
        out.append(
            f'<circle cx="{WIDTH - MARGIN_R - 140}" cy="{legend_y}" r="3.5" fill="{color}"/>'
        )
        out.append(
            f'<text x="{WIDTH - MARGIN_R - 130}" y="{legend_y + 4}" font-size="11">'
            f"{s.label}</text>"
        )
        legend_y += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"


def points_csv(series: list[RdSeries], oracle: RdCurve | None = None) -> str:
    """CSV mirror of exactly the plotted points."""
    lines = ["series,distortion,rate_bits_per_dim"]
    for s in series:
        for d, r in zip(s.distortions, s.rates):
            lines.append(f"{s.label},{float(d)!r},{float(r)!r}")
    if oracle is not None:
        for d, r in zip(oracle.distortions, oracle.rates):
            lines.append(f"{oracle.label or 'oracle'},{float(d)!r},{float(r)!r}")
    return "\n".join(lines) + "\n"


def series_from_rows(rows: list[dict]) -> list[RdSeries]:
    """Group result rows into one series per regime."""
    by_regime: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        by_regime.setdefault(str(row["regime"]), []).append(
            (float(row["mse"]), float(row["rate_bits_per_dim"]))
        )
    out = []
    for regime in sorted(by_regime):
        pts = by_regime[regime]
        out.append(
            RdSeries(
                label=regime,
                distortions=np.array([p[0] for p in pts]),
                rates=np.array([p[1] for p in pts]),
            )
        )
    return out
