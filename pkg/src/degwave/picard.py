"""Picard iteration of the characteristic map on time slabs.

One application of the map takes a slab state (v, Rbar, Sbar, Vbar, Wbar),
traces both characteristic families with speed c(v) back to the slab start,
transports R0, S0 (and their derivatives) with the sources evaluated on the
input state, and rebuilds u by integrating (R + S)/2 in time. Iterating to
the fixed point gives the solution on the slab; slabs are chained until the
target time or a breakdown.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import _sweep
from .fields import Grid1D, Interpolation, ScalarField1D, bracket_weight, monotone_slopes
from .problem import DegenerateState, ProblemSpec, check_levi, initial_fields, validate_assumptions

log = logging.getLogger(__name__)

FIELD_NAMES = ("u", "R", "S", "V", "W")


class ContractionFailure(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class DegeneracyBreakdown(RuntimeError):
    def __init__(self, message, time=None, x=None, value=None):
        super().__init__(message)
        self.time, self.x, self.value = time, x, value


class Termination(str, Enum):
    REACHED_TARGET_T = "reached_target_T"
    BREAKDOWN_BLOWUP = "breakdown_blowup"
    BREAKDOWN_DEGENERACY = "breakdown_degeneracy"
    CONTRACTION_FAILURE = "contraction_failure"


@dataclass
class SlabState:
    """Fields on the time levels t0 + j*dt, j = 0..m-1, stored as (m, n) arrays."""

    grid: Grid1D
    t0: float
    dt: float
    u: np.ndarray
    R: np.ndarray
    S: np.ndarray
    V: np.ndarray
    W: np.ndarray
    interpolation: Interpolation = Interpolation.CUBIC_MONOTONE
    jac_minus: np.ndarray | None = None
    jac_plus: np.ndarray | None = None
    edge_hits: int = 0

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.m)

    @property
    def t1(self) -> float:
        return self.t0 + self.dt * (self.m - 1)

    def field(self, name: str, level: int) -> ScalarField1D:
        return ScalarField1D(self.grid, getattr(self, name)[level], self.interpolation)

    def level(self, j: int) -> dict:
        return {name: self.field(name, j) for name in FIELD_NAMES}

    @classmethod
    def constant_extension(cls, grid, t0, dt, m, initial: dict,
                           interpolation=Interpolation.CUBIC_MONOTONE) -> "SlabState":
        arrays = {}
        for name in FIELD_NAMES:
            v = initial[name]
            v = v.values if isinstance(v, ScalarField1D) else np.asarray(v, dtype=float)
            arrays[name] = np.tile(v, (m, 1))
        return cls(grid, float(t0), float(dt), interpolation=interpolation, **arrays)


@dataclass
class ContractionStats:
    iterations: int = 0
    distances: list = field(default_factory=list)
    factor: float = 0.0
    converged: bool = False
    tol: float = 0.0

    def record(self, d: float):
        self.distances.append(float(d))
        self.iterations = len(self.distances)
        ratios = [b / a for a, b in zip(self.distances, self.distances[1:]) if a > 0]
        self.factor = float(np.median(ratios)) if ratios else 0.0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "distances": self.distances,
                "factor": self.factor, "converged": self.converged, "tol": self.tol}


# ---------------------------------------------------------------- the map

def recover_gradients(u, R, S, spec: ProblemSpec):
    """u_t = (R + S)/2 and u_x = (R - S)/(2 c(u)); fields in, fields out."""
    wrap = isinstance(u, ScalarField1D)
    uv, Rv, Sv = (f.values if isinstance(f, ScalarField1D) else np.asarray(f, dtype=float)
                  for f in (u, R, S))
    if np.any(uv <= 0):
        raise DegenerateState("degenerate state: u <= 0")
    ut = 0.5 * (Rv + Sv)
    ux = (Rv - Sv) / (2.0 * spec.coefficient.c(uv))
    if wrap:
        return u.with_values(ut), u.with_values(ux)
    return ut, ux


def _slopes(a: np.ndarray, cubic: bool, h: float) -> np.ndarray:
    return monotone_slopes(a, h) if cubic else np.zeros_like(a)


def _sweep_inputs(state: SlabState, spec: ProblemSpec):
    v, Rb, Sb, Vb, Wb = state.u, state.R, state.S, state.V, state.W
    if np.any(v <= 0):
        j, i = np.unravel_index(np.argmin(v), v.shape)
        raise DegenerateState(f"degenerate state: v={v[j, i]:.3g} <= 0 at x={state.grid.nodes[i]:.6g}, "
                              f"t={state.times[j]:.6g}")
    coef = spec.coefficient
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        speed = coef.c(v)
        speedx = coef.speed_x(v, Rb, Sb)
        N1, N2, L = coef.sources(v, Rb, Sb)
        p = coef.source_partials(v, Rb, Sb)
        vx = (Rb - Sb) / (2.0 * speed)
        dminus = (p["N1u"] + p["Lu"]) * vx + (p["N1R"] + p["LR"]) * Vb + (p["N1S"] + p["LS"]) * Wb
        dplus = (p["N2u"] + p["Lu"]) * vx + (p["N2R"] + p["LR"]) * Vb + (p["N2S"] + p["LS"]) * Wb
    return speed, speedx, N1 + L, N2 + L, dminus, dplus


def _phi_sweep(state: SlabState, spec: ProblemSpec):
    if state.m < 2:
        raise ValueError("a slab needs at least two time levels")
    speed, speedx, sminus, splus, dminus, dplus = _sweep_inputs(state, spec)
    g = state.grid
    cubic = state.interpolation is Interpolation.CUBIC_MONOTONE
    sl = lambda a: _slopes(np.ascontiguousarray(a), cubic, g.h)  # noqa: E731
    common = (speed, sl(speed), speedx, sl(speedx))
    R0, S0, V0, W0 = state.R[0], state.S[0], state.V[0], state.W[0]
    R, V, jm, _, hm = _sweep.characteristic_sweep(
        g.x_min, g.h, state.dt, -1.0, cubic, *common,
        sminus, sl(sminus), dminus, sl(dminus), R0, sl(R0), V0, sl(V0))
    S, W, jp, _, hp = _sweep.characteristic_sweep(
        g.x_min, g.h, state.dt, 1.0, cubic, *common,
        splus, sl(splus), dplus, sl(dplus), S0, sl(S0), W0, sl(W0))
    return R, S, V, W, jm, jp, int(hm.sum() + hp.sum())


def _integrate_u(u0: np.ndarray, R: np.ndarray, S: np.ndarray, dt: float) -> np.ndarray:
    ut = 0.5 * (R + S)
    u = np.empty_like(R)
    u[0] = u0
    u[1:] = u0 + dt * np.cumsum(0.5 * (ut[1:] + ut[:-1]), axis=0)
    return u


def apply_phi(state: SlabState, spec: ProblemSpec) -> SlabState:
    """One application of the map: (v, Rbar, Sbar) -> (u, R, S).

    The derivative fields V, W and the foot Jacobians come from the same
    characteristic traces and are returned on the new state as well.
    """
    R, S, V, W, jm, jp, hits = _phi_sweep(state, spec)
    u = _integrate_u(state.u[0], R, S, state.dt)
    # level 0 is carried over untouched
    R[0], S[0], V[0], W[0] = state.R[0], state.S[0], state.V[0], state.W[0]
    return replace(state, u=u, R=R, S=S, V=V, W=W, jac_minus=jm, jac_plus=jp, edge_hits=hits)


def update_derivatives(state: SlabState, spec: ProblemSpec):
    """V = R_x and W = S_x of the map's output, from the differentiated transport."""
    _, _, V, W, _, _, _ = _phi_sweep(state, spec)
    V[0], W[0] = state.V[0], state.W[0]
    return V, W


def sup_distance(a: SlabState, b: SlabState) -> float:
    return float(sum(np.max(np.abs(getattr(a, k) - getattr(b, k))) for k in ("u", "R", "S")))


def solve_slab(spec: ProblemSpec, initial: dict, grid: Grid1D, t0: float, dt: float, m: int,
               tol: float = 1e-10, max_iter: int = 50,
               interpolation=Interpolation.CUBIC_MONOTONE,
               degeneracy_threshold: float = 0.0):
    """Iterate the map from the constant-in-time extension of ``initial``.

    Returns ``(state, stats)``. Raises ``ContractionFailure`` when the
    distance fails to decrease three times in a row and
    ``DegeneracyBreakdown`` when the converged u drops to
    ``degeneracy_threshold`` or below.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    state = SlabState.constant_extension(grid, t0, dt, m, initial, interpolation)
    stats = ContractionStats(tol=tol)
    rises = 0
    for _ in range(max_iter):
        try:
            new = apply_phi(state, spec)
        except FloatingPointError as exc:
            raise ContractionFailure(f"non-finite sources during iteration: {exc}", stats) from exc
        d = sup_distance(new, state)
        if not np.isfinite(d):
            raise ContractionFailure("iteration produced non-finite values", stats)
        stats.record(d)
        state = new
        if d <= tol:
            stats.converged = True
            break
        if len(stats.distances) > 1 and d >= stats.distances[-2]:
            rises += 1
            if rises >= 3:
                raise ContractionFailure(
                    f"distance non-decreasing for 3 iterations (d={d:.3e})", stats)
        else:
            rises = 0
    if np.min(state.u) <= degeneracy_threshold:
        j, i = np.unravel_index(np.argmin(state.u), state.u.shape)
        raise DegeneracyBreakdown(
            f"u={state.u[j, i]:.3e} at or below degeneracy threshold {degeneracy_threshold:.3e}",
            time=float(state.times[j]), x=float(grid.nodes[i]), value=float(state.u[j, i]))
    return state, stats


# ---------------------------------------------------------------- continuation

@dataclass
class SlabPolicy:
    """How long slabs are and how many levels they carry.

    ``initial_length="auto"`` picks min(0.1, 0.5/(1 + sup|c'(u) c(u) u_x| + C_K))
    from the fields at each slab start; dt = length/(levels - 1) is fixed by
    the first slab and failed slabs are halved down to ``min_steps`` steps.
    """

    initial_length: float | str = "auto"
    levels: int = 65
    min_steps: int = 4

    def __post_init__(self):
        if self.levels < 3:
            raise ValueError("levels per slab must be >= 3")
        if self.initial_length != "auto" and not float(self.initial_length) > 0:
            raise ValueError("initial slab length must be > 0 or 'auto'")


def auto_slab_length(spec: ProblemSpec, fields: dict, C_K: float) -> float:
    """min(0.1, 0.5/(1 + sup|c'(u) c(u) u_x| + C_K)); c(u) u_x = (R - S)/2."""
    u = _vals(fields["u"])
    rate = spec.coefficient.dc(u) * 0.5 * (_vals(fields["R"]) - _vals(fields["S"]))
    return min(0.1, 0.5 / (1.0 + float(np.max(np.abs(rate))) + C_K))


def _vals(f):
    return f.values if isinstance(f, ScalarField1D) else np.asarray(f, dtype=float)


@dataclass
class Solution:
    spec: ProblemSpec
    grid: Grid1D
    slabs: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    termination: Termination = Termination.REACHED_TARGET_T
    message: str = ""

    @property
    def boundaries(self) -> list:
        if not self.slabs:
            return []
        return [s.t0 for s in self.slabs] + [self.slabs[-1].t1]

    @property
    def t_final(self) -> float:
        return self.slabs[-1].t1 if self.slabs else 0.0

    def stacked(self, name: str) -> np.ndarray:
        """Field over all slabs with shared boundary levels kept once."""
        parts = [getattr(s, name) if k == 0 else getattr(s, name)[1:]
                 for k, s in enumerate(self.slabs)]
        return np.concatenate(parts, axis=0)

    @property
    def times(self) -> np.ndarray:
        parts = [s.times if k == 0 else s.times[1:] for k, s in enumerate(self.slabs)]
        return np.concatenate(parts)

    def final_level(self) -> dict:
        return self.slabs[-1].level(self.slabs[-1].m - 1)

    def summary(self) -> dict:
        return {"termination": self.termination.value, "message": self.message,
                "t_final": self.t_final, "slab_boundaries": self.boundaries,
                "slabs": [st.to_dict() for st in self.stats]}


def continue_solution(spec: ProblemSpec, grid: Grid1D, T_target: float,
                      slab_policy: SlabPolicy | None = None, tol: float = 1e-10, max_iter: int = 50,
                      interpolation=Interpolation.CUBIC_MONOTONE,
                      degeneracy_threshold: float | None = None,
                      blowup_cap: float = math.inf, initial: dict | None = None) -> Solution:
    """Chain slabs from t = 0 until ``T_target`` or a breakdown.

    The default degeneracy threshold is 1e-3 * c1 * <x_max>^(-alpha) with c1
    the measured lower decay constant of u0 on ``grid``.
    """
    policy = slab_policy or SlabPolicy()
    if not T_target > 0:
        raise ValueError("T_target must be > 0")
    interpolation = Interpolation(interpolation)
    fields = initial or initial_fields(spec, grid, interpolation)
    if degeneracy_threshold is None:
        c1 = validate_assumptions(spec, grid).measured_c1
        reach = max(abs(grid.x_min), abs(grid.x_max))
        degeneracy_threshold = 1e-3 * c1 * float(bracket_weight(reach)) ** (-spec.alpha)
    C_K = 0.0 if spec.flux.is_zero else check_levi(spec, K_bound=spec.k_bound(grid)).measured_C_K

    def policy_length(f):
        if policy.initial_length == "auto":
            return auto_slab_length(spec, f, C_K)
        return float(policy.initial_length)

    dt = policy_length(fields) / (policy.levels - 1)
    sol = Solution(spec, grid)
    t = 0.0
    eps = 1e-12 * max(1.0, T_target)
    while T_target - t > eps:
        steps = max(policy.min_steps, int(round(policy_length(fields) / dt)))
        remaining = int(math.ceil((T_target - t) / dt - 1e-9))
        slab_dt = dt
        if remaining <= steps:
            steps = max(remaining, 1)
            slab_dt = (T_target - t) / steps
        while True:
            try:
                state, stats = solve_slab(spec, fields, grid, t, slab_dt, steps + 1, tol, max_iter,
                                          interpolation, degeneracy_threshold)
                if not stats.converged:
                    raise ContractionFailure(f"no convergence in {max_iter} iterations", stats)
                break
            except (ContractionFailure, DegeneracyBreakdown, DegenerateState) as exc:
                log.info("slab at t=%.6g with %d steps failed: %s", t, steps, exc)
                if steps // 2 < policy.min_steps:
                    degenerate = isinstance(exc, (DegeneracyBreakdown, DegenerateState))
                    sol.termination = (Termination.BREAKDOWN_DEGENERACY if degenerate
                                       else Termination.CONTRACTION_FAILURE)
                    sol.message = f"t={t:.6g}: {exc}"
                    return sol
                steps //= 2
                slab_dt = dt
        sol.slabs.append(state)
        sol.stats.append(stats)
        t = state.t1
        blow = _blowup_indicator(state, spec)
        if not np.isfinite(blow) or blow > blowup_cap:
            sol.termination = Termination.BREAKDOWN_BLOWUP
            sol.message = f"t={t:.6g}: weighted gradient norm {blow:.3e} exceeds cap {blowup_cap:.3e}"
            return sol
        if np.min(state.jac_minus) <= 0 or np.min(state.jac_plus) <= 0:
            sol.termination = Termination.BREAKDOWN_BLOWUP
            sol.message = f"t={t:.6g}: characteristics of one family crossed"
            return sol
        fields = {name: getattr(state, name)[-1].copy() for name in FIELD_NAMES}
    sol.termination = Termination.REACHED_TARGET_T
    return sol


def _blowup_indicator(state: SlabState, spec: ProblemSpec) -> float:
    w = bracket_weight(state.grid.nodes) ** spec.beta
    ut = 0.5 * (state.R + state.S)
    ux = (state.R - state.S) / (2.0 * spec.coefficient.c(state.u))
    return float(np.max(np.max(w * np.abs(ut), axis=1) + np.max(w * np.abs(ux), axis=1)))


# ---------------------------------------------------------------- residuals

@dataclass
class ResidualReport:
    times: np.ndarray
    sup: np.ndarray

    @property
    def max(self) -> float:
        return float(np.max(self.sup)) if self.sup.size else 0.0

    def to_dict(self) -> dict:
        return {"max": self.max, "times": self.times.tolist(), "sup": self.sup.tolist()}


def pde_residual(solution: Solution, spec: ProblemSpec | None = None, margin: float = 0.0) -> ResidualReport:
    """Sup over interior nodes of |u_tt - (c(u)^2 u_x)_x - F(u) u_x| per level.

    u_tt uses central time differences inside each slab; the flux term uses
    the compact conservative stencil with c^2 averaged to half nodes.
    ``margin`` drops nodes closer than that to either grid end.
    """
    spec = spec or solution.spec
    coef = spec.coefficient
    g = solution.grid
    h = g.h
    x = g.nodes
    keep = (x[1:-1] >= g.x_min + margin) & (x[1:-1] <= g.x_max - margin)
    times, sups = [], []
    for s in solution.slabs:
        if s.m < 3:
            continue
        u = s.u
        utt = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / s.dt**2
        um = u[1:-1]
        c2 = coef.c(um) ** 2
        c2_half = 0.5 * (c2[:, 1:] + c2[:, :-1])
        q = c2_half * (um[:, 1:] - um[:, :-1]) / h
        div = (q[:, 1:] - q[:, :-1]) / h
        ux = (um[:, 2:] - um[:, :-2]) / (2.0 * h)
        forcing = spec.flux(um[:, 1:-1]) * ux
        res = utt[:, 1:-1] - div - forcing
        sups.append(np.max(np.abs(res[:, keep]), axis=1))
        times.append(s.times[1:-1])
    if not sups:
        return ResidualReport(np.array([]), np.array([]))
    return ResidualReport(np.concatenate(times), np.concatenate(sups))
