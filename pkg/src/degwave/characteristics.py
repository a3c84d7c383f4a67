"""Characteristic curves dx/ds = ±c, their spatial Jacobians and empirical probes.

The solver's hot loop lives in the compiled sweep; this module is the
readable, vectorised reference used for probing the Lipschitz and Jacobian
bounds, for tests, and for tracing individual curves on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid1D, Interpolation, monotone_slopes


class CharacteristicExit(RuntimeError):
    """A traced curve left the spatial domain; carries the exit time."""

    def __init__(self, message, time):
        super().__init__(f"{message} at s={time:.6g}")
        self.time = float(time)


def _eval_rows(vals, slopes, rows, x_min, h, x, cubic):
    """Interpolate row ``rows[p]`` of an (m, n) stack at ``x[p]`` for every p."""
    n = vals.shape[1]
    s = (x - x_min) / h
    i = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
    t = s - i
    y0, y1 = vals[rows, i], vals[rows, i + 1]
    if not cubic:
        return y0 + t * (y1 - y0)
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (3 * t2 - 2 * t3) * y1
            + h * ((t3 - 2 * t2 + t) * slopes[rows, i] + (t3 - t2) * slopes[rows, i + 1]))


class SpeedProvider:
    """Speed c(t, x) >= 0 and its spatial derivative, callable on arrays.

    Either backed by stored time levels (linear in t, field interpolation in
    x) or by plain Python callables for analytic test fields. ``domain`` is
    the spatial interval a trace must stay in.
    """

    def __init__(self, speed, speed_x, domain=(-math.inf, math.inf), sup_speed=None,
                 time_range=(-math.inf, math.inf)):
        self._speed = speed
        self._speed_x = speed_x
        self.domain = (float(domain[0]), float(domain[1]))
        self.time_range = (float(time_range[0]), float(time_range[1]))
        self._sup = sup_speed

    @classmethod
    def constant(cls, value: float) -> "SpeedProvider":
        if value < 0:
            raise ValueError("speed must be >= 0")
        return cls(lambda t, x: np.full(np.shape(x), float(value)),
                   lambda t, x: np.zeros(np.shape(x)), sup_speed=float(value))

    @classmethod
    def from_levels(cls, grid: Grid1D, times, speed, speed_x,
                    interpolation=Interpolation.CUBIC_MONOTONE) -> "SpeedProvider":
        times = np.asarray(times, dtype=float)
        speed = np.atleast_2d(np.asarray(speed, dtype=float))
        speed_x = np.atleast_2d(np.asarray(speed_x, dtype=float))
        if speed.shape != (times.size, grid.n_points) or speed_x.shape != speed.shape:
            raise ValueError("level arrays must have shape (len(times), n_points)")
        if np.any(speed < 0):
            raise ValueError("speed must be >= 0")
        cubic = Interpolation(interpolation) is Interpolation.CUBIC_MONOTONE
        sl = (monotone_slopes(speed, grid.h), monotone_slopes(speed_x, grid.h)) if cubic else (None, None)
        x_min, h = grid.x_min, grid.h

        def lookup(vals, slopes):
            def ev(t, x):
                x = np.asarray(x, dtype=float)
                t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
                if times.size == 1:
                    rows = np.zeros(x.shape, dtype=np.int64)
                    return _eval_rows(vals, slopes, rows, x_min, h, x, cubic)
                k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
                w = (t - times[k]) / (times[k + 1] - times[k])
                a = _eval_rows(vals, slopes, k, x_min, h, x, cubic)
                b = _eval_rows(vals, slopes, k + 1, x_min, h, x, cubic)
                return (1.0 - w) * a + w * b
            return ev

        return cls(lookup(speed, sl[0]), lookup(speed_x, sl[1]),
                   domain=(grid.x_min, grid.x_max), sup_speed=float(np.max(speed)),
                   time_range=(times[0], times[-1]))

    @classmethod
    def from_slab(cls, state, spec) -> "SpeedProvider":
        """Speed c(u) and c'(u) u_x on the stored levels of a slab."""
        coef = spec.coefficient
        return cls.from_levels(state.grid, state.times, coef.c(state.u),
                               coef.speed_x(state.u, state.R, state.S), state.interpolation)

    @property
    def sup_speed(self) -> float:
        if self._sup is None:
            raise ValueError("sup_speed unknown for a callable-backed provider; pass sup_speed")
        return self._sup

    def speed(self, t, x):
        return np.asarray(self._speed(t, x), dtype=float)

    def speed_x(self, t, x):
        return np.asarray(self._speed_x(t, x), dtype=float)

    def _check_time(self, *ts):
        lo, hi = self.time_range
        tol = 1e-12 * max(1.0, abs(lo), abs(hi)) if math.isfinite(lo) and math.isfinite(hi) else 0.0
        for t in ts:
            t = np.asarray(t)
            if np.any(t < lo - tol) or np.any(t > hi + tol):
                raise ValueError(f"time outside the provider's range [{lo}, {hi}]")


@dataclass
class CharacteristicPath:
    """Samples (s_k, x_k) of one traced curve, anchor first."""

    sign: float
    anchor: tuple
    s: np.ndarray
    x: np.ndarray
    speed: SpeedProvider = field(repr=False)
    jacobian: float | np.ndarray | None = None

    @property
    def endpoint(self):
        return self.x[-1]

    @property
    def samples(self) -> list:
        return list(zip(self.s.tolist(), np.asarray(self.x).tolist()))


def _rk4(speed: SpeedProvider, sign, t_from, x_from, t_to, dt, speed_x=None):
    """Integrate x (and J when ``speed_x`` is given) from t_from to t_to.

    All inputs broadcast; every curve takes the same number of equal steps,
    the smallest count that keeps each step at or below ``dt``.
    """
    x = np.array(x_from, dtype=float)
    t0 = np.broadcast_to(np.asarray(t_from, dtype=float), x.shape).astype(float)
    t1 = np.broadcast_to(np.asarray(t_to, dtype=float), x.shape).astype(float)
    span = float(np.max(np.abs(t1 - t0))) if x.size else 0.0
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    step = (t1 - t0) / n
    lo, hi = speed.domain
    J = np.ones_like(x) if speed_x is not None else None
    xs, ss = [x.copy()], [t0.copy()]

    def inside(z, s_start):
        out = (z < lo) | (z > hi)
        if np.any(out):
            when = np.broadcast_to(s_start, z.shape)[out]
            raise CharacteristicExit("characteristic left domain", float(when.flat[0]))
        return z

    f = lambda s, z: sign * speed.speed(s, z)  # noqa: E731
    g = (lambda s, z, j: sign * speed_x(s, z) * j) if speed_x is not None else None  # noqa: E731
    s = t0.copy()
    for k in range(n):
        half = s + 0.5 * step
        end = t0 + (k + 1) * step
        k1 = f(s, x)
        x2 = inside(x + 0.5 * step * k1, s)
        k2 = f(half, x2)
        x3 = inside(x + 0.5 * step * k2, s)
        k3 = f(half, x3)
        x4 = inside(x + step * k3, s)
        k4 = f(end, x4)
        if g is not None:
            l1 = g(s, x, J)
            l2 = g(half, x2, J + 0.5 * step * l1)
            l3 = g(half, x3, J + 0.5 * step * l2)
            l4 = g(end, x4, J + step * l3)
            J = J + step / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        x = inside(x + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), s)
        s = end
        xs.append(x.copy())
        ss.append(s.copy())
    return np.array(ss), np.array(xs), J


def trace_characteristic(speed: SpeedProvider, sign: float, t_from: float, x_from, t_to: float,
                         dt: float) -> CharacteristicPath:
    """RK4 trace of dx/ds = sign * speed(s, x) from (t_from, x_from) to s = t_to.

    ``x_from`` may be an array of anchors sharing the same times. Raises
    ``CharacteristicExit`` when a stage leaves ``speed.domain``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    sign = _sign(sign)
    speed._check_time(t_from, t_to)
    s, x, _ = _rk4(speed, sign, t_from, x_from, t_to, dt)
    if np.ndim(x_from) == 0:
        s, x = s.ravel(), x.ravel()
    else:
        s = s[:, 0] if s.ndim > 1 else s
    return CharacteristicPath(sign, (float(t_from), x_from), s, x, speed)


def trace_jacobian(path: CharacteristicPath, speed_x=None):
    """d/ds J = sign * speed_x(s, x(s)) * J with J = 1 at the anchor.

    Re-integrates the curve together with J on the same RK4 steps, so the
    positions match the path exactly. ``speed_x`` defaults to the path's
    provider; any callable (s, x) -> array is accepted.
    """
    sx = speed_x or path.speed.speed_x
    if isinstance(sx, SpeedProvider):
        sx = sx.speed_x
    t_from, x_from = path.anchor
    n = len(path.s) - 1
    span = abs(float(path.s[-1]) - float(t_from))
    dt = span / n if n and span > 0 else 1.0
    _, _, J = _rk4(path.speed, path.sign, t_from, x_from, path.s[-1], dt * (1 + 1e-12), speed_x=sx)
    J = float(J) if np.ndim(x_from) == 0 else J
    path.jacobian = J
    return J


def _sign(sign) -> float:
    if sign in ("+", 1, 1.0):
        return 1.0
    if sign in ("-", -1, -1.0):
        return -1.0
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


# ---------------------------------------------------------------- probes

@dataclass
class LipschitzReport:
    max_ratio: float
    bound: float
    passed: bool
    used: int
    skipped: int
    slab_length: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def random_probe_samples(rng: np.random.Generator, count: int, t_range, x_range) -> np.ndarray:
    """``count`` rows (t1, x1, t2, x2, t3, t4) drawn uniformly from the boxes."""
    t = rng.uniform(t_range[0], t_range[1], size=(count, 4))
    x = rng.uniform(x_range[0], x_range[1], size=(count, 2))
    return np.column_stack([t[:, 0], x[:, 0], t[:, 1], x[:, 1], t[:, 2], t[:, 3]])


def lipschitz_probe(speed: SpeedProvider, samples, dt: float, bound: float | None = None) -> LipschitzReport:
    """Largest |x(t3; t1, x1) - x(t4; t2, x2)| / (|x1-x2| + |t1-t2| + |t3-t4|).

    Both families are traced for every sample. The ceiling defaults to
    3 (1 + sup speed); samples with a zero denominator are skipped.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    t1, x1, t2, x2, t3, t4 = samples.T
    denom = np.abs(x1 - x2) + np.abs(t1 - t2) + np.abs(t3 - t4)
    keep = denom > 0
    ceiling = 3.0 * (1.0 + speed.sup_speed) if bound is None else float(bound)
    lo, hi = speed.time_range
    slab = float(hi - lo) if math.isfinite(lo) and math.isfinite(hi) else float("nan")
    if not keep.any():
        return LipschitzReport(0.0, ceiling, True, 0, int((~keep).sum()), slab)
    best = 0.0
    for sign in (-1.0, 1.0):
        _, xa, _ = _rk4(speed, sign, t1[keep], x1[keep], t3[keep], dt)
        _, xb, _ = _rk4(speed, sign, t2[keep], x2[keep], t4[keep], dt)
        best = max(best, float(np.max(np.abs(xa[-1] - xb[-1]) / denom[keep])))
    return LipschitzReport(best, ceiling, best <= ceiling, int(keep.sum()), int((~keep).sum()), slab)


@dataclass
class JacobianReport:
    min_jacobian: float
    max_jacobian: float
    C: float
    worst_excess: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def jacobian_bound_report(state, spec, rel_tol: float = 1e-9) -> JacobianReport:
    """Check 0 < J <= exp(C (t - t0)) for the stored foot Jacobians of a slab.

    C is the sup of |c'(u) u_x| over the slab's stored levels. ``worst_excess``
    is max J / exp(C (t - t0)); the check passes when it is at most 1 + rel_tol.
    """
    if state.jac_minus is None or state.jac_plus is None:
        raise ValueError("slab carries no Jacobians; run the solver first")
    C = float(np.max(np.abs(spec.coefficient.speed_x(state.u, state.R, state.S))))
    elapsed = (state.times - state.t0)[:, None]
    ceiling = np.exp(C * elapsed)
    both = np.stack([state.jac_minus, state.jac_plus])
    excess = float(np.max(both / ceiling))
    jmin = float(np.min(both))
    return JacobianReport(jmin, float(np.max(both)), C, excess, jmin > 0 and excess <= 1.0 + rel_tol)
