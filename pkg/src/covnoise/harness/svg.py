"""Minimal deterministic SVG 1.1 plots: loss curves and 2-D parameter paths over contours."""

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import EmptySeries, IoFailure

WIDTH, HEIGHT = 640, 440
MARGIN = {"left": 70, "right": 150, "top": 30, "bottom": 50}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(v):
    return f"{v:.2f}"


def contour_points(problem, level, center=None, n=128):
    """Points of {theta : 1/2 (theta - c)^T A (theta - c) = level} for a 2-D problem."""
    if problem.dim != 2:
        raise ValueError("contours need a 2-D problem")
    c = np.zeros(2) if center is None else np.asarray(center, dtype=np.float64)
    w, P = problem.spectrum.eigenvalues, problem.spectrum.eigenvectors
    phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    radii = np.sqrt(2.0 * level / w)
    circle = np.stack([radii[0] * np.cos(phi), radii[1] * np.sin(phi)])
    return (P @ circle).T + c


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi <= ylo:
            ylo, yhi = ylo - 0.5, yhi + 0.5
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.x0 = MARGIN["left"]
        self.x1 = WIDTH - MARGIN["right"]
        self.y0 = HEIGHT - MARGIN["bottom"]
        self.y1 = MARGIN["top"]

    def px(self, x):
        return self.x0 + (x - self.xlo) / (self.xhi - self.xlo) * (self.x1 - self.x0)

    def py(self, y):
        return self.y0 + (y - self.ylo) / (self.yhi - self.ylo) * (self.y1 - self.y0)


def _bounds(arrays, pad):
    pts = np.vstack(arrays)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lo - pad * span, hi + pad * span


def _axes(fr, log_y, xlabel, ylabel):
    out = [
        f'<rect x="{fr.x0}" y="{fr.y1}" width="{fr.x1 - fr.x0}" height="{fr.y0 - fr.y1}" '
        'fill="none" stroke="#000" stroke-width="1"/>'
    ]
    for t in _nice_ticks(fr.xlo, fr.xhi):
        x = fr.px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{fr.y0}" x2="{_fmt(x)}" y2="{fr.y0 + 5}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(x)}" y="{fr.y0 + 18}" text-anchor="middle" font-size="11">{t:.3g}</text>')
    for t in _nice_ticks(fr.ylo, fr.yhi):
        y = fr.py(t)
        label = f"1e{t:.2g}" if log_y else f"{t:.3g}"
        out.append(f'<line x1="{fr.x0 - 5}" y1="{_fmt(y)}" x2="{fr.x0}" y2="{_fmt(y)}" stroke="#000"/>')
        out.append(f'<text x="{fr.x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{label}</text>')
    cx = (fr.x0 + fr.x1) / 2
    cy = (fr.y0 + fr.y1) / 2
    out.append(f'<text x="{_fmt(cx)}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{_fmt(cy)}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_fmt(cy)})">{escape(ylabel)}</text>'
    )
    return out


def _polyline(fr, pts, color, cls="series", width=1.5):
    if len(pts) == 1:
        x, y = pts[0]
        return f'<circle class="{cls}" cx="{_fmt(fr.px(x))}" cy="{_fmt(fr.py(y))}" r="3" fill="{color}"/>'
    coords = " ".join(f"{_fmt(fr.px(x))},{_fmt(fr.py(y))}" for x, y in pts)
    return f'<polyline class="{cls}" points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _legend(labels):
    out = []
    x = WIDTH - MARGIN["right"] + 12
    for i, label in enumerate(labels):
        y = MARGIN["top"] + 10 + 18 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(
            f'<g class="legend"><line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" stroke="{color}" stroke-width="2"/>'
            f'<text x="{x + 24}" y="{y + 4}" font-size="11">{escape(str(label))}</text></g>'
        )
    return out


def render_svg(series, kind="line", problem=None, center=None, log_y=False, title="", xlabel="", ylabel="", levels=None):
    """SVG text for the series. ``trajectory2d`` expects (x, y) = parameter coordinates."""
    if kind not in ("line", "trajectory2d"):
        raise ValueError(f"unknown plot kind {kind!r}")
    clean = []
    for label, pts in series:
        arr = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        arr = arr[np.all(np.isfinite(arr), axis=1)]
        if log_y:
            arr = arr[arr[:, 1] > 0]
            arr = np.column_stack([arr[:, 0], np.log10(arr[:, 1])])
        clean.append((label, arr))
    if not clean or all(len(a) == 0 for _, a in clean):
        raise EmptySeries("nothing to plot")
    body = []
    nonempty = [a for _, a in clean if len(a)]
    if kind == "trajectory2d":
        if problem is None:
            raise ValueError("trajectory2d needs a QuadraticProblem for the contours")
        lo, hi = _bounds(nonempty, 0.1)
        fr = _Frame(lo[0], hi[0], lo[1], hi[1])
        c = np.zeros(2) if center is None else np.asarray(center, dtype=np.float64)
        if levels is None:
            corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]]) - c
            top = 0.5 * max(float(v @ problem.A @ v) for v in corners)
            levels = list(top * np.geomspace(1e-3, 1.0, 8))
        body.append('<clipPath id="plot"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath>'.format(
            fr.x0, fr.y1, fr.x1 - fr.x0, fr.y0 - fr.y1))
        body.append('<g clip-path="url(#plot)">')
        for lv in levels:
            pts = contour_points(problem, lv, c)
            coords = " ".join(f"{_fmt(fr.px(x))},{_fmt(fr.py(y))}" for x, y in pts)
            body.append(f'<polygon class="contour" points="{coords}" fill="none" stroke="#bbb" stroke-width="0.8"/>')
        body.append("</g>")
    else:
        lo, hi = _bounds(nonempty, 0.03)
        fr = _Frame(lo[0], hi[0], lo[1], hi[1])

    body.append('<g clip-path="url(#plot)">' if kind == "trajectory2d" else "<g>")
    for i, (_, arr) in enumerate(clean):
        if len(arr):
            body.append(_polyline(fr, arr, PALETTE[i % len(PALETTE)]))
    body.append("</g>")
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    parts += body
    parts += _axes(fr, log_y, xlabel, ylabel)
    parts += _legend([label for label, _ in clean])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(series, kind, path, **kwargs):
    text = render_svg(series, kind, **kwargs)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
    return text
