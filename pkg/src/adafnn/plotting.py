"""Self-contained SVG line plots of basis dumps (no rendering dependencies)."""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .fda import Grid, l2_norm, make_quadrature
from .io import PathLike, read_basis_csv

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=70, right=150, top=40, bottom=50)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _unit_norm(t: np.ndarray, curves: np.ndarray) -> np.ndarray:
    q = make_quadrature(Grid(t))
    norms = l2_norm(curves, q)
    norms[norms == 0] = 1.0
    return curves / norms[:, None]


def scale_curves(t, curves) -> np.ndarray:
    """Rescale each curve to unit quadrature norm (zero curves are left alone)."""
    return _unit_norm(np.asarray(t, dtype=np.float64), np.atleast_2d(np.asarray(curves, dtype=np.float64)))


def _nice_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + step * 1e-9, step)]


def render_svg(series: Sequence[Tuple[str, np.ndarray, np.ndarray, bool]], title: str = "") -> str:
    """series: (label, t, values, dashed)."""
    pl, pr = MARGIN["left"], WIDTH - MARGIN["right"]
    pt, pb = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    if x1 == x0:
        x1 = x0 + 1.0

    def sx(v):
        return pl + (v - x0) / (x1 - x0) * (pr - pl)

    def sy(v):
        return pb - (v - y0) / (y1 - y0) * (pb - pt)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>')
    parts.append('<g class="axes" stroke="black" stroke-width="1">')
    parts.append(f'<line x1="{pl}" y1="{pb}" x2="{pr}" y2="{pb}"/>')
    parts.append(f'<line x1="{pl}" y1="{pt}" x2="{pl}" y2="{pb}"/>')
    parts.append("</g>")
    parts.append('<g class="ticks" font-family="sans-serif" font-size="11">')
    for v in _nice_ticks(x0, x1):
        x = sx(v)
        parts.append(f'<line x1="{x:.2f}" y1="{pb}" x2="{x:.2f}" y2="{pb + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{pb + 18}" text-anchor="middle">{v:g}</text>')
    for v in _nice_ticks(y0, y1):
        y = sy(v)
        parts.append(f'<line x1="{pl - 5}" y1="{y:.2f}" x2="{pl}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{pl - 8}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    if y0 < 0 < y1:
        parts.append(f'<line x1="{pl}" y1="{sy(0):.2f}" x2="{pr}" y2="{sy(0):.2f}" stroke="#bbbbbb" stroke-dasharray="2,3"/>')
    parts.append(f'<text x="{(pl + pr) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">t</text>')
    parts.append("</g>")
    legend = ['<g class="legend" font-family="sans-serif" font-size="12">']
    for k, (label, t, v, dashed) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, v))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{pts}"/>')
        ly = pt + 10 + 20 * k
        legend.append(f'<line x1="{pr + 15}" y1="{ly}" x2="{pr + 40}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        legend.append(f'<text x="{pr + 46}" y="{ly + 4}">{escape(label)}</text>')
    legend.append("</g>")
    parts.extend(legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_bases(dump: PathLike, out: PathLike, truth: Optional[PathLike] = None, title: str = "") -> Path:
    """Plot every curve of a basis dump, optionally over the true signal(s).

    Curves are scaled to unit quadrature norm. With an overlay, each learned
    curve's sign is chosen to correlate positively with the true signal it
    matches best.
    """
    names, t, curves = read_basis_csv(dump)
    series = []
    ref_curves = None
    if truth is not None:
        tnames, tt, tcurves = read_basis_csv(truth)
        tcurves = scale_curves(tt, tcurves)
        ref_curves = np.array([np.interp(t, tt, c) for c in tcurves])
        for n, c in zip(tnames, tcurves):
            series.append((n, tt, c, False))
    scaled = scale_curves(t, curves)
    for n, c in zip(names, scaled):
        if ref_curves is not None:
            corr = [np.dot(c - c.mean(), r - r.mean()) for r in ref_curves]
            best = int(np.argmax(np.abs(corr)))
            if corr[best] < 0:
                c = -c
        series.append((n, t, c, ref_curves is not None))
    out = Path(out)
    out.write_text(render_svg(series, title))
    return out
