"""Solution CSV files and small self-contained SVG line plots."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .picard import Solution, recover_gradients

CSV_COLUMNS = ("t", "x", "u", "R", "S", "u_t", "u_x", "V", "W")


def format_number(v: float) -> str:
    """Shortest text that parses back to the same double; integers lose '.0'."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return "0" if s == "-0" else s


def solution_rows(solution: Solution):
    """Yield (t, x, u, R, S, u_t, u_x, V, W) rows, time-major."""
    u, R, S = (solution.stacked(k) for k in ("u", "R", "S"))
    V, W = solution.stacked("V"), solution.stacked("W")
    ut, ux = recover_gradients(u, R, S, solution.spec)
    x = solution.grid.nodes
    for j, t in enumerate(solution.times):
        for i in range(x.size):
            yield (t, x[i], u[j, i], R[j, i], S[j, i], ut[j, i], ux[j, i], V[j, i], W[j, i])


def write_solution_csv(solution: Solution, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in solution_rows(solution):
            fh.write(",".join(format_number(v) for v in row) + "\n")
    return path


def read_solution_csv(path) -> dict:
    """Columns of a solution CSV as float arrays keyed by header name."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    data = data.reshape(-1, len(CSV_COLUMNS))
    return {name: data[:, k] for k, name in enumerate(CSV_COLUMNS)}


# ---------------------------------------------------------------- SVG

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
_W, _H = 640, 400
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 150, 30, 50


def _nice_ticks(lo: float, hi: float, count: int = 5):
    span = hi - lo
    raw = span / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((k * mag for k in (1, 2, 2.5, 5, 10) if k * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _range(values):
    if not values:
        return 0.0, 1.0
    lo, hi = float(min(values)), float(max(values))
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        pad = 0.5 if lo == 0 else 0.1 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def emit_plot(series: dict, path, title: str = "", xlabel: str = "x", ylabel: str = "") -> Path:
    """Line plot of ``{name: (x, y)}`` as a standalone SVG.

    Output depends only on the inputs; non-finite points are dropped.
    """
    clean = {}
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        if xs.shape != ys.shape:
            raise ValueError(f"series {name!r}: x and y lengths differ")
        ok = np.isfinite(xs) & np.isfinite(ys)
        clean[name] = (xs[ok], ys[ok])
    x_lo, x_hi = _range([v for xs, _ in clean.values() for v in xs.tolist()])
    y_lo, y_hi = _range([v for _, ys in clean.values() for v in ys.tolist()])
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(v):
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return _TOP + ph - (v - y_lo) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _nice_ticks(x_lo, x_hi):
        X = px(v)
        out.append(f'<line x1="{X:.2f}" y1="{_TOP + ph}" x2="{X:.2f}" y2="{_TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{_TOP + ph + 18}" text-anchor="middle">{v:.4g}</text>')
    for v in _nice_ticks(y_lo, y_hi):
        Y = py(v)
        out.append(f'<line x1="{_LEFT - 5}" y1="{Y:.2f}" x2="{_LEFT}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 8}" y="{Y + 4:.2f}" text-anchor="end">{v:.4g}</text>')
    if title:
        out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="18" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="{_H - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="15" y="{_TOP + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 15 {_TOP + ph / 2:.2f})">{escape(ylabel)}</text>')
    for k, (name, (xs, ys)) in enumerate(clean.items()):
        color = _COLORS[k % len(_COLORS)]
        if xs.size:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = _TOP + 12 + 16 * k
        out.append(f'<line x1="{_W - _RIGHT + 12}" y1="{ly}" x2="{_W - _RIGHT + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_W - _RIGHT + 36}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
