"""Uniform 1D grids, sampled scalar fields and weighted sup-norms."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .expressions import Expression


class Interpolation(str, Enum):
    LINEAR = "linear"
    CUBIC_MONOTONE = "cubic_monotone"


class OutOfDomain(ValueError):
    """Raised when a field is evaluated outside its grid."""


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_min >= self.x_max:
            raise ValueError(f"need finite x_min < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_points, dtype=float) * self.h

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, (self.n_points - 1) * factor + 1)


def bracket_weight(x):
    """Japanese bracket <x> = (1 + x^2)^(1/2)."""
    x = np.asarray(x, dtype=float)
    return np.hypot(1.0, x)


def monotone_slopes(values: np.ndarray, h: float) -> np.ndarray:
    """Node slopes for monotone cubic Hermite interpolation (Fritsch-Carlson).

    Works along the last axis, so a stack of time levels ``(m, n)`` is
    limited in one call. Slopes start from the centred three-point estimate,
    which makes the interpolant exact for quadratics. On every interval whose
    four-point neighbourhood is monotone the slopes are forced to
    the sign of the data and scaled so that alpha^2 + beta^2 <= 9, hence
    monotone data give a monotone interpolant that stays inside the data
    range. At data extrema the centred slope is kept, so smooth peaks are
    resolved to third order instead of being clipped flat.
    """
    y = np.asarray(values, dtype=float)
    n = y.shape[-1]
    delta = np.diff(y, axis=-1) / h
    if n < 3:
        return np.concatenate([delta, delta], axis=-1)
    m = np.empty_like(y)
    m[..., 1:-1] = 0.5 * (delta[..., :-1] + delta[..., 1:])
    m[..., 0] = 0.5 * (3.0 * delta[..., 0] - delta[..., 1])
    m[..., -1] = 0.5 * (3.0 * delta[..., -1] - delta[..., -2])

    # intervals whose neighbours do not reverse direction (ends count their
    # single neighbour twice); everything else borders a data extremum
    sgn = np.sign(delta)
    left = np.concatenate([sgn[..., :1], sgn[..., :-1]], axis=-1)
    right = np.concatenate([sgn[..., 1:], sgn[..., -1:]], axis=-1)
    mono = (sgn != 0) & (left * sgn >= 0) & (right * sgn >= 0)
    # flat data stay flat
    flat = delta == 0.0
    m[..., :-1][flat] = 0.0
    m[..., 1:][flat] = 0.0

    # Fritsch-Carlson scaling on each monotone interval
    lo = np.where(mono, np.where(m[..., :-1] * delta < 0, 0.0, m[..., :-1]), 0.0)
    hi = np.where(mono, np.where(m[..., 1:] * delta < 0, 0.0, m[..., 1:]), 0.0)
    safe = np.where(mono, delta, 1.0)
    with np.errstate(over="ignore"):
        r = np.hypot(lo / safe, hi / safe)
    tau = np.where(r > 3.0, 3.0 / np.maximum(r, 3.0), 1.0)
    lo, hi = tau * lo, tau * hi

    # a node takes the smaller limited slope of its monotone intervals
    inf = np.full(y.shape[:-1] + (1,), np.inf)
    cand_left = np.concatenate([inf, np.where(mono, np.abs(hi), np.inf)], axis=-1)
    cand_right = np.concatenate([np.where(mono, np.abs(lo), np.inf), inf], axis=-1)
    val_left = np.concatenate([inf, hi], axis=-1)
    val_right = np.concatenate([lo, inf], axis=-1)
    pick_left = cand_left <= cand_right
    limited = np.where(pick_left, val_left, val_right)
    touched = np.isfinite(np.minimum(cand_left, cand_right))
    return np.where(touched, limited, m)


def hermite_eval(values, slopes, x_min, h, x):
    """Evaluate the cubic Hermite interpolant with given node slopes."""
    n = values.shape[-1]
    s = (np.asarray(x, dtype=float) - x_min) / h
    i = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
    t = s - i
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return (h00 * values[i] + h01 * values[i + 1]
            + h * (h10 * slopes[i] + h11 * slopes[i + 1]))


@dataclass(frozen=True)
class ScalarField1D:
    """Immutable samples of a function on a ``Grid1D``."""

    grid: Grid1D
    values: np.ndarray
    interpolation: Interpolation = Interpolation.CUBIC_MONOTONE

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite value at node {bad} (x={self.grid.nodes[bad]:.6g})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "ScalarField1D":
        return ScalarField1D(self.grid, values, self.interpolation)

    def __call__(self, x):
        return interpolate(self, x)


def interpolate(f: ScalarField1D, x):
    """Value of ``f`` at ``x`` (scalar or array), exact at nodes."""
    g = f.grid
    xa = np.asarray(x, dtype=float)
    tol = 1e-12 * max(1.0, abs(g.x_min), abs(g.x_max))
    if np.any(xa < g.x_min - tol) or np.any(xa > g.x_max + tol) or np.any(np.isnan(xa)):
        raise OutOfDomain(f"out of domain: x outside [{g.x_min}, {g.x_max}]")
    xa = np.clip(xa, g.x_min, g.x_max)
    if f.interpolation is Interpolation.LINEAR:
        out = np.interp(xa, g.nodes, f.values)
    else:
        out = hermite_eval(f.values, monotone_slopes(f.values, g.h), g.x_min, g.h, xa)
    # snap exact node hits to the stored value
    s = (xa - g.x_min) / g.h
    k = np.rint(s).astype(np.int64)
    on_node = np.abs(s - k) < 1e-13
    out = np.where(on_node, f.values[np.clip(k, 0, g.n_points - 1)], out)
    return float(out) if np.ndim(out) == 0 else out


def weighted_sup(f, p: float, x=None) -> float:
    """max_i <x_i>^p |f(x_i)| over the grid nodes.

    ``f`` may be a ``ScalarField1D`` or a raw array together with its nodes
    ``x``; a 2D array is reduced over every row.
    """
    if isinstance(f, ScalarField1D):
        values, x = f.values, f.x
    else:
        values = np.asarray(f, dtype=float)
    if values.size == 0:
        return 0.0
    if p == 0:
        return float(np.max(np.abs(values)))
    return float(np.max(bracket_weight(x) ** p * np.abs(values)))


def sample_expression(expr, grid: Grid1D, interpolation=Interpolation.CUBIC_MONOTONE) -> ScalarField1D:
    expr = Expression.parse(expr)
    vals = expr(grid.nodes)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"expression {expr} is non-finite at node {i} (x={grid.nodes[i]:.6g})")
    return ScalarField1D(grid, vals, interpolation)


def spatial_derivative(f: ScalarField1D) -> ScalarField1D:
    """Second-order finite-difference derivative (one-sided at the ends)."""
    if f.grid.n_points < 3:
        raise ValueError("spatial_derivative needs at least 3 points")
    return f.with_values(np.gradient(f.values, f.grid.h, edge_order=2))
