"""Dependency-free SVG plots: risk curves, predicted-vs-true scatter, division U-curves."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import InputError

KINDS = ("risk_curve", "scatter_pred_vs_true", "division_ucurve")
WIDTH, HEIGHT = 480, 360
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


class _Frame:
    """Maps data coordinates into the plot area."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float], square: bool = False):
        x0, x1 = float(min(xs)), float(max(xs))
        y0, y1 = float(min(ys)), float(max(ys))
        if square:
            x0 = y0 = min(x0, y0)
            x1 = y1 = max(x1, y1)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def px(self, x: float) -> float:
        return round(MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN), 2)

    def py(self, y: float) -> float:
        return round(HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN), 2)


def _axes(fr: _Frame, xlabel: str, ylabel: str, title: str) -> list[str]:
    b, l, r, t = HEIGHT - MARGIN, MARGIN, WIDTH - MARGIN, MARGIN
    out = [f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="#000"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
           f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
           f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for v, anchor in ((fr.x0, "start"), (fr.x1, "end")):
        out.append(f'<text x="{fr.px(v)}" y="{b + 14}" text-anchor="{anchor}" font-size="10">{v:.3g}</text>')
    for v in (fr.y0, fr.y1):
        out.append(f'<text x="{l - 4}" y="{fr.py(v) + 3}" text-anchor="end" font-size="10">{v:.3g}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head,
                      f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>', *body, "</svg>"]) + "\n"


def _finite(values, what: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise InputError(f"{what}: empty series")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{what}: non-finite values")
    return a


def regression_line(x, y) -> tuple[float, float]:
    """Least-squares (slope, intercept); slope 0 through the mean when x is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    den = float(dx @ dx)
    if den == 0.0:
        return 0.0, float(y.mean())
    slope = float(dx @ (y - y.mean())) / den
    return slope, float(y.mean() - slope * x.mean())


def risk_curve_svg(x: Sequence[float], curves: Mapping[str, Sequence[float]],
                   title: str = "", xlabel: str = "epoch") -> str:
    if not curves:
        raise InputError("risk_curve: no curves")
    xa = _finite(x, "risk_curve x")
    ys = {k: _finite(v, f"risk_curve {k}") for k, v in curves.items()}
    for k, v in ys.items():
        if len(v) != len(xa):
            raise InputError(f"risk_curve {k}: {len(v)} values for {len(xa)} x positions")
    fr = _Frame(xa, np.concatenate(list(ys.values())))
    body = _axes(fr, xlabel, "risk", title)
    for n, (k, v) in enumerate(ys.items()):
        c = COLORS[n % len(COLORS)]
        pts = " ".join(f"{fr.px(a)},{fr.py(b)}" for a, b in zip(xa, v))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        body.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 * (n + 1)}" text-anchor="end" '
                    f'font-size="11" fill="{c}">{escape(k)}</text>')
    return _document(body)


def scatter_svg(predicted: Sequence[float], true: Sequence[float], title: str = "",
                labels: Sequence[str] | None = None) -> str:
    """Points (true, predicted) with a dashed y = x line and a least-squares fit."""
    p = _finite(predicted, "scatter predicted")
    t = _finite(true, "scatter true")
    if len(p) != len(t):
        raise InputError(f"scatter: {len(p)} predictions for {len(t)} true values")
    fr = _Frame(t, p, square=True)
    body = _axes(fr, "true risk", "predicted risk", title)
    body.append(f'<line class="identity" x1="{fr.px(fr.x0)}" y1="{fr.py(fr.x0)}" '
                f'x2="{fr.px(fr.x1)}" y2="{fr.py(fr.x1)}" stroke="#555" stroke-dasharray="5,4"/>')
    slope, icpt = regression_line(t, p)
    body.append(f'<line class="regression" data-slope="{slope!r}" data-intercept="{icpt!r}" '
                f'x1="{fr.px(fr.x0)}" y1="{fr.py(slope * fr.x0 + icpt)}" x2="{fr.px(fr.x1)}" '
                f'y2="{fr.py(slope * fr.x1 + icpt)}" stroke="{COLORS[1]}"/>')
    for k, (a, b) in enumerate(zip(t, p)):
        tip = f"<title>{escape(labels[k])}</title>" if labels else ""
        body.append(f'<circle cx="{fr.px(a)}" cy="{fr.py(b)}" r="3" fill="{COLORS[0]}">{tip}</circle>')
    return _document(body)


def ucurve_svg(per_division: Mapping[int, Sequence[float]], title: str = "",
               ylabel: str = "target risk") -> str:
    """Mean over seeds per division with mean +/- std error bars."""
    if not per_division:
        raise InputError("division_ucurve: no divisions")
    divs = sorted(per_division)
    stats = []
    for d in divs:
        v = _finite(per_division[d], f"division_ucurve division {d}")
        stats.append((float(v.mean()), float(v.std())))
    lo = [m - s for m, s in stats]
    hi = [m + s for m, s in stats]
    fr = _Frame(divs, lo + hi)
    body = _axes(fr, "division index", ylabel, title)
    pts = " ".join(f"{fr.px(d)},{fr.py(m)}" for d, (m, _) in zip(divs, stats))
    body.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[0]}" stroke-width="1.5"/>')
    for d, (m, s) in zip(divs, stats):
        x = fr.px(d)
        body.append(f'<line class="errorbar" x1="{x}" y1="{fr.py(m - s)}" x2="{x}" y2="{fr.py(m + s)}" '
                    f'stroke="{COLORS[0]}"/>')
        body.append(f'<circle cx="{x}" cy="{fr.py(m)}" r="3" fill="{COLORS[0]}"/>')
    return _document(body)


def emit_plot(series, kind: str, path, title: str = "") -> Path:
    """Write one SVG.

    ``risk_curve``: ``{"x": [...], "curves": {name: [...]}}``.
    ``scatter_pred_vs_true``: ``{"predicted": [...], "true": [...]}``.
    ``division_ucurve``: ``{division: [per-seed values]}``.
    """
    if kind not in KINDS:
        raise InputError(f"unknown plot kind {kind!r}; expected one of {KINDS}")
    if not series:
        raise InputError(f"{kind}: empty series")
    if kind == "risk_curve":
        svg = risk_curve_svg(series["x"], series["curves"], title)
    elif kind == "scatter_pred_vs_true":
        svg = scatter_svg(series["predicted"], series["true"], title, series.get("labels"))
    else:
        svg = ucurve_svg(series, title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
