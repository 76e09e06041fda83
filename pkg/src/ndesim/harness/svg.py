"""Minimal SVG emitter: line plots and heatmaps, nothing else."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 360
MARGIN = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _axis_map(lo: float, hi: float, a: float, b: float, log: bool):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        hi = lo + 1.0

    def f(v):
        v = math.log10(v) if log else v
        return a + (v - lo) / (hi - lo) * (b - a)

    return f


def _text(x, y, s, anchor="middle", size=12, rotate=None):
    rot = f' transform="rotate({rotate} {x:.1f} {y:.1f})"' if rotate else ""
    return f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}"{rot}>{escape(str(s))}</text>'


def _wrap(body: list[str], title: str) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', _text(W / 2, 24, title, size=14), *body, "</svg>\n"])


def line_plot(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
) -> str:
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if np.isfinite(x) and np.isfinite(y)]
    if logx:
        pts = [p for p in pts if p[0] > 0]
    if logy:
        pts = [p for p in pts if p[1] > 0]
    if not pts:
        return _wrap([_text(W / 2, H / 2, "no data")], title)
    xs, ys = zip(*pts)
    fx = _axis_map(min(xs), max(xs), MARGIN, W - 20, logx)
    fy = _axis_map(min(ys), max(ys), H - MARGIN, 40, logy)
    body = [
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - 20}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{MARGIN}" y2="40" stroke="black"/>',
        _text(W / 2, H - 15, xlabel),
        _text(18, H / 2, ylabel, rotate=-90),
    ]
    for v, anchor, pos in ((min(xs), "start", (MARGIN, H - MARGIN + 16)), (max(xs), "end", (W - 20, H - MARGIN + 16))):
        body.append(_text(*pos, f"{v:.3g}", anchor=anchor, size=10))
    for v in (min(ys), max(ys)):
        body.append(_text(MARGIN - 4, fy(v) + 4, f"{v:.3g}", anchor="end", size=10))
    for i, (name, (sx, sy)) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        good = [(x, y) for x, y in zip(sx, sy) if (x, y) in pts]
        path = " ".join(f"{fx(x):.1f},{fy(y):.1f}" for x, y in good)
        body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.extend(f'<circle cx="{fx(x):.1f}" cy="{fy(y):.1f}" r="2.5" fill="{color}"/>' for x, y in good)
        body.append(_text(W - 24, 44 + 14 * i, name, anchor="end", size=10).replace("<text", f'<text fill="{color}"', 1))
    return _wrap(body, title)


def _color(t: float) -> str:
    # white to dark blue
    t = min(max(t, 0.0), 1.0)
    r, g, b = (int(255 + (c - 255) * t) for c in (8, 48, 107))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(
    values: np.ndarray,
    row_labels: Sequence,
    col_labels: Sequence,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log: bool = True,
) -> str:
    """``values[i, j]`` is drawn at row ``i`` (bottom to top), column ``j``."""
    v = np.asarray(values, dtype=float)
    finite = v[np.isfinite(v) & ((v > 0) if log else True)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    scale = _axis_map(lo, hi, 0.0, 1.0, log and lo > 0)
    nr, nc = v.shape
    cw, ch = (W - MARGIN - 20) / nc, (H - MARGIN - 40) / nr
    body = [_text(W / 2, H - 15, xlabel), _text(18, H / 2, ylabel, rotate=-90)]
    for i in range(nr):
        y = H - MARGIN - (i + 1) * ch
        body.append(_text(MARGIN - 4, y + ch / 2 + 4, row_labels[i], anchor="end", size=10))
        for j in range(nc):
            x = MARGIN + j * cw
            val = v[i, j]
            ok = np.isfinite(val) and (val > 0 or not log)
            fill = _color(scale(val)) if ok else "#cccccc"
            body.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" height="{ch:.1f}" fill="{fill}" stroke="white"/>')
            if ok:
                body.append(_text(x + cw / 2, y + ch / 2 + 4, f"{val:.2g}", size=9).replace("<text", '<text fill="#888888"', 1))
    for j in range(nc):
        body.append(_text(MARGIN + (j + 0.5) * cw, H - MARGIN + 16, col_labels[j], size=10))
    return _wrap(body, title)


def write_svg(path: str | Path, svg: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
