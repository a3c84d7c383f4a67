"""Weighted decay monitoring, breakdown detection and consistency checks.

Everything here reads a finished ``Solution``; nothing is solved again.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import sympy as sp
from scipy.integrate import cumulative_trapezoid

from .expressions import Expression
from .fields import bracket_weight
from .picard import Solution
from .problem import CoefficientMode, ProblemSpec


def _levels(solution: Solution):
    """Stacked (u, R, S, V, W) over all levels, plus times and nodes."""
    names = ("u", "R", "S", "V", "W")
    return {k: solution.stacked(k) for k in names}, solution.times, solution.grid.nodes


def _weighted_rows(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.max(w * np.abs(values), axis=-1)


# ---------------------------------------------------------------- decay report

@dataclass
class DecayReport:
    """Measured decay constants per stored level.

    C1 = inf <x>^alpha u, C2 = sup u, C3 = max of the beta-weighted sups of
    R and S, C4 = max of the gamma-weighted sups of R_t, R_x, S_t, S_x.
    ``C4_t`` and ``C4_x`` keep the time and space parts apart.
    """

    times: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    C4: np.ndarray
    C4_t: np.ndarray
    C4_x: np.ndarray
    margin: float
    floor_fraction: float
    passed: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in ("times", "C1", "C2", "C3", "C4", "C4_t", "C4_x")}
        out.update(margin=self.margin, floor_fraction=self.floor_fraction, passed=dict(self.passed))
        return out


def time_derivatives(u, R, S, V, W, spec: ProblemSpec):
    """R_t = c V + N1 + L and S_t = -c W + N2 + L from the transport equations."""
    coef = spec.coefficient
    c = coef.c(u)
    N1, N2, L = coef.sources(u, R, S)
    return c * V + N1 + L, -c * W + N2 + L


def decay_report(solution: Solution, spec: ProblemSpec | None = None, margin: float = 4.0,
                 floor_fraction: float = 0.5, machine_floor: float = 1e-12) -> DecayReport:
    """Per-level C1..C4 and pass flags against the initial level.

    Upper constants pass while they stay at most ``margin`` times their
    initial value (or ``machine_floor`` when that is zero); C1 passes while
    it stays at least ``floor_fraction`` of its initial value.
    """
    if not solution.slabs:
        raise ValueError("empty solution")
    spec = spec or solution.spec
    f, times, x = _levels(solution)
    w = bracket_weight(x)
    C1 = np.min(w ** spec.alpha * f["u"], axis=1)
    C2 = np.max(f["u"], axis=1)
    wb = w ** spec.beta
    C3 = np.maximum(_weighted_rows(f["R"], wb), _weighted_rows(f["S"], wb))
    Rt, St = time_derivatives(f["u"], f["R"], f["S"], f["V"], f["W"], spec)
    wg = w ** spec.gamma
    C4_t = np.maximum(_weighted_rows(Rt, wg), _weighted_rows(St, wg))
    C4_x = np.maximum(_weighted_rows(f["V"], wg), _weighted_rows(f["W"], wg))
    C4 = np.maximum(C4_t, C4_x)
    passed = {"C1": bool(np.all(C1 >= floor_fraction * C1[0]) and np.all(C1 > 0))}
    for name, arr in (("C2", C2), ("C3", C3), ("C4", C4)):
        ceiling = margin * max(arr[0], machine_floor)
        passed[name] = bool(np.all(np.isfinite(arr)) and np.all(arr <= ceiling))
    return DecayReport(times, C1, C2, C3, C4, C4_t, C4_x, margin, floor_fraction, passed)


# ---------------------------------------------------------------- breakdown

class BreakdownKind(str, Enum):
    NONE = "none"
    BLOWUP = "blowup"
    DEGENERACY = "degeneracy"
    CHARACTERISTIC_CROSSING = "characteristic_crossing"


@dataclass(frozen=True)
class BreakdownFlag:
    kind: BreakdownKind = BreakdownKind.NONE
    time: float = float("nan")
    x: float = float("nan")
    value: float = float("nan")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "time": self.time, "x": self.x, "value": self.value}


def detect_breakdown(solution: Solution, spec: ProblemSpec | None = None,
                     blowup_cap: float = 1e6, degeneracy_floor_fraction: float = 1e-3) -> BreakdownFlag:
    """Earliest threshold crossing over the stored levels.

    Blow-up: beta-weighted sup of u_t plus that of u_x exceeds ``blowup_cap``.
    Degeneracy: inf <x>^alpha u drops below ``degeneracy_floor_fraction``
    times its initial value. Crossing: a stored foot Jacobian is <= 0.
    At equal times crossing is reported before blow-up before degeneracy.
    """
    if not (blowup_cap > 0 and degeneracy_floor_fraction > 0):
        raise ValueError("thresholds must be positive")
    spec = spec or solution.spec
    if not solution.slabs:
        return BreakdownFlag()
    x = solution.grid.nodes
    w = bracket_weight(x)
    wb, wa = w ** spec.beta, w ** spec.alpha
    coef = spec.coefficient
    floor = None
    for k, s in enumerate(solution.slabs):
        start = 0 if k == 0 else 1
        with np.errstate(all="ignore"):
            ut = 0.5 * (s.R + s.S)
            ux = (s.R - s.S) / (2.0 * coef.c(s.u))
        blow = _weighted_rows(ut, wb) + _weighted_rows(ux, wb)
        tail = np.min(wa * s.u, axis=1)
        if floor is None:
            floor = degeneracy_floor_fraction * tail[0]
        for j in range(start, s.m):
            t = float(s.times[j])
            for jac in (s.jac_minus, s.jac_plus):
                if jac is not None and np.min(jac[j]) <= 0:
                    i = int(np.argmin(jac[j]))
                    return BreakdownFlag(BreakdownKind.CHARACTERISTIC_CROSSING, t, float(x[i]), float(jac[j, i]))
            if not np.isfinite(blow[j]) or blow[j] > blowup_cap:
                i = int(np.argmax(wb * (np.abs(ut[j]) + np.abs(ux[j]))))
                return BreakdownFlag(BreakdownKind.BLOWUP, t, float(x[i]), float(blow[j]))
            if tail[j] < floor:
                i = int(np.argmin(wa * s.u[j]))
                return BreakdownFlag(BreakdownKind.DEGENERACY, t, float(x[i]), float(tail[j]))
    return BreakdownFlag()


class SignReport(NamedTuple):
    min_R: float
    min_S: float
    preserved: bool


def sign_preservation_check(solution: Solution, tol: float = 1e-8) -> SignReport:
    """Global minima of R and S; preserved when nonnegative data stay >= -tol."""
    if not solution.spec.flux.is_zero:
        raise ValueError("claim requires F≡0")
    R, S = solution.stacked("R"), solution.stacked("S")
    min_R, min_S = float(np.min(R)), float(np.min(S))
    applies = np.min(R[0]) >= 0 and np.min(S[0]) >= 0
    return SignReport(min_R, min_S, bool(applies and min_R >= -tol and min_S >= -tol))


# ---------------------------------------------------------------- conservation form

@dataclass
class ConservationResidual:
    """sup |u_t - v_x| and sup |v_t - sigma(u)_x - G(u)| over interior nodes."""

    continuity: float
    momentum: float
    scale: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def stress_function(spec: ProblemSpec):
    """sigma with sigma' = c(u)^2 and sigma(0) = 0, as a numpy callable."""
    if spec.coefficient_mode is CoefficientMode.POWER:
        p = 2.0 * spec.a + 1.0
        return lambda u: np.asarray(u, dtype=float) ** p / p
    theta = sp.Symbol("theta", positive=True)
    c = Expression.parse(spec.c_expr, var="theta").sym.subs(sp.Symbol("theta", real=True), theta)
    sigma = sp.integrate(c**2, (theta, 0, theta))
    if sigma.has(sp.Integral) or sigma.has(sp.Piecewise):
        raise ValueError("no closed-form primitive for c(u)^2")
    fn = sp.lambdify(theta, sigma, modules="numpy")
    return lambda u: np.broadcast_to(np.asarray(fn(np.asarray(u, dtype=float)), dtype=float),
                                     np.shape(u))


def conservation_form_residual(solution: Solution, spec: ProblemSpec | None = None) -> ConservationResidual:
    """Residuals of the first-order system u_t = v_x, v_t = sigma(u)_x + G(u).

    v(t, x) = int_{x_min}^x u_t dy by the composite trapezoid rule. Because
    the integral starts at x_min rather than -infinity, the flux
    sigma(u)_x + G(u) at x_min is added back so the identity is exact on the
    truncated domain. Time derivatives are central differences inside each
    slab, space derivatives central differences; only interior nodes count.
    """
    spec = spec or solution.spec
    G = spec.flux.primitive  # raises for expression fluxes
    try:
        G(np.ones(1))
    except ValueError as exc:
        raise ValueError("no closed-form primitive") from exc
    sigma = stress_function(spec)
    g = solution.grid
    h = g.h
    cont, mom, scale = 0.0, 0.0, 0.0
    for s in solution.slabs:
        ut = 0.5 * (s.R + s.S)
        scale = max(scale, float(np.max(np.abs(ut))))
        v = cumulative_trapezoid(ut, dx=h, axis=1, initial=0.0)
        vx = (v[:, 2:] - v[:, :-2]) / (2.0 * h)
        cont = max(cont, float(np.max(np.abs(ut[:, 1:-1] - vx))))
        if s.m < 3:
            continue
        vt = (v[2:] - v[:-2]) / (2.0 * s.dt)
        um = s.u[1:-1]
        sig = sigma(um)
        sig_x = (sig[:, 2:] - sig[:, :-2]) / (2.0 * h)
        left = (-3.0 * sig[:, 0] + 4.0 * sig[:, 1] - sig[:, 2]) / (2.0 * h) + G(um[:, 0])
        res = vt[:, 1:-1] - sig_x - G(um[:, 1:-1]) + left[:, None]
        mom = max(mom, float(np.max(np.abs(res))))
    return ConservationResidual(cont, mom, scale)


# ---------------------------------------------------------------- oracles

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def dalembert(u0, u1, x, t):
    """(u0(x+t) + u0(x-t))/2 + (1/2) int_{x-t}^{x+t} u1, the unit-speed solution.

    ``u0`` and ``u1`` are expressions or callables; the integral uses
    48-point Gauss-Legendre quadrature.
    """
    u0 = Expression.parse(u0) if isinstance(u0, str) else u0
    u1 = Expression.parse(u1) if isinstance(u1, str) else u1
    x = np.asarray(x, dtype=float)
    t = float(t)
    base = 0.5 * (u0(x + t) + u0(x - t))
    if t == 0:
        return base
    y = x[..., None] + t * _GL_NODES
    integral = t * np.sum(_GL_WEIGHTS * u1(y), axis=-1)
    return base + 0.5 * integral
