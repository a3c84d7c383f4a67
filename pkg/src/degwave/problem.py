"""Problem definitions for u_tt = (c(u)^2 u_x)_x + F(u) u_x.

``c(u) = u**a`` in power mode, or any closed-form ``c`` in general mode.
This module validates initial data against the weighted decay and Levi
conditions, derives gamma and builds the initial Riemann invariants
R0 = u1 + c(u0) u0', S0 = u1 - c(u0) u0'.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .expressions import Expression
from .fields import Grid1D, Interpolation, ScalarField1D, bracket_weight


class DegenerateState(ValueError):
    """Raised when a source or gradient is requested at u <= 0."""


class CoefficientMode(str, Enum):
    POWER = "power"
    GENERAL = "general"


def derive_gamma(a: float, alpha: float) -> float:
    if a < 0 or alpha < 0:
        raise ValueError(f"a and alpha must be >= 0, got a={a}, alpha={alpha}")
    return 0.0 if a >= 1 else (1.0 - a) * alpha


@dataclass(frozen=True)
class Flux:
    """Lower-order coefficient F(theta): zero, power law or free expression."""

    kind: str = "zero"
    amplitude: float = 0.0
    exponent: float = 0.0
    expr: str | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "power", "expression"):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if self.kind == "expression" and not self.expr:
            raise ValueError("expression flux needs 'expr'")
        if self.kind == "power" and self.exponent < 0:
            raise ValueError("power flux needs exponent >= 0")

    @classmethod
    def zero(cls) -> "Flux":
        return cls("zero")

    @classmethod
    def power(cls, amplitude: float, exponent: float) -> "Flux":
        return cls("power", float(amplitude), float(exponent))

    @property
    def expression(self) -> Expression:
        if self.kind == "zero":
            return Expression.parse("0", var="theta")
        if self.kind == "power":
            return Expression.parse(f"({self.amplitude!r})*theta**({self.exponent!r})", var="theta")
        return Expression.parse(self.expr, var="theta")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "power" and self.amplitude == 0.0)

    def __call__(self, theta):
        if self.is_zero:
            return np.zeros_like(np.asarray(theta, dtype=float))
        return self._fn(theta)

    def derivative(self, theta):
        if self.is_zero:
            return np.zeros_like(np.asarray(theta, dtype=float))
        return self._dfn(theta)

    def primitive(self, theta):
        """G with G(0) = 0; closed form only for zero and power fluxes."""
        theta = np.asarray(theta, dtype=float)
        if self.is_zero:
            return np.zeros_like(theta)
        if self.kind != "power":
            raise ValueError("no closed-form primitive for an expression flux")
        b = self.exponent
        return self.amplitude * theta ** (b + 1.0) / (b + 1.0)

    @property
    def _fn(self):
        return _cached(self, "_fn_cache", lambda: self.expression)

    @property
    def _dfn(self):
        return _cached(self, "_dfn_cache", lambda: self.expression.derivative())

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "power":
            return {"kind": "power", "amplitude": self.amplitude, "exponent": self.exponent}
        return {"kind": "expression", "expr": self.expr}


def _cached(obj, name, build):
    value = obj.__dict__.get(name)
    if value is None:
        value = build()
        object.__setattr__(obj, name, value)
    return value


@dataclass(frozen=True)
class ProblemSpec:
    exponent_a: float
    u0_expr: str
    u1_expr: str
    alpha: float = 0.0
    beta: float = 0.0
    flux: Flux = field(default_factory=Flux.zero)
    coefficient_mode: CoefficientMode = CoefficientMode.POWER
    c_expr: str | None = None
    K_bound: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        for name in ("exponent_a", "alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        g = derive_gamma(self.exponent_a, self.alpha)
        if self.gamma is None:
            object.__setattr__(self, "gamma", g)
        elif self.gamma != g:
            raise ValueError(f"gamma={self.gamma} disagrees with derived value {g}")
        mode = CoefficientMode(self.coefficient_mode)
        object.__setattr__(self, "coefficient_mode", mode)
        if mode is CoefficientMode.GENERAL and not self.c_expr:
            raise ValueError("general coefficient mode needs c_expr")
        if self.K_bound is not None and not self.K_bound > 0:
            raise ValueError("K_bound must be > 0")
        # parse eagerly so grammar errors surface at construction
        Expression.parse(self.u0_expr)
        Expression.parse(self.u1_expr)
        if self.c_expr:
            Expression.parse(self.c_expr, var="theta")

    @property
    def a(self) -> float:
        return self.exponent_a

    @property
    def u0(self) -> Expression:
        return _cached(self, "_u0", lambda: Expression.parse(self.u0_expr))

    @property
    def u1(self) -> Expression:
        return _cached(self, "_u1", lambda: Expression.parse(self.u1_expr))

    @property
    def coefficient(self) -> "Coefficient":
        return _cached(self, "_coef", lambda: Coefficient(self))

    def k_bound(self, grid: Grid1D) -> float:
        if self.K_bound is not None:
            return float(self.K_bound)
        return max(2.0 * float(np.max(self.u0(grid.nodes))), 1.0)


class Coefficient:
    """Speed c(u) and the source terms of the Riemann-invariant system.

    With R = u_t + c u_x and S = u_t - c u_x the equation becomes
    R_t - c R_x = N1 + L and S_t + c S_x = N2 + L where
    N1 = k (R^2 - R S), N2 = k (S^2 - R S), k = c'/(2c) and
    L = F (R - S) / (2c).
    """

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.a = spec.exponent_a
        self.general = spec.coefficient_mode is CoefficientMode.GENERAL
        self.flux = spec.flux
        if self.general:
            e = Expression.parse(spec.c_expr, var="theta")
            self._c, self._dc, self._d2c = e, e.derivative(), e.derivative(2)

    def c(self, u):
        u = np.asarray(u, dtype=float)
        if self.general:
            return self._c(u)
        if self.a == 0:
            return np.ones_like(u)
        return u ** self.a

    def dc(self, u):
        u = np.asarray(u, dtype=float)
        if self.general:
            return self._dc(u)
        if self.a == 0:
            return np.zeros_like(u)
        return self.a * u ** (self.a - 1.0)

    def d2c(self, u):
        u = np.asarray(u, dtype=float)
        if self.general:
            return self._d2c(u)
        if self.a in (0, 1):
            return np.zeros_like(u)
        return self.a * (self.a - 1.0) * u ** (self.a - 2.0)

    def k(self, u):
        """c'(u) / (2 c(u))."""
        if self.general:
            return self.dc(u) / (2.0 * self.c(u))
        return self.a / (2.0 * np.asarray(u, dtype=float))

    def dk(self, u):
        if self.general:
            c, dc, d2c = self.c(u), self.dc(u), self.d2c(u)
            return (d2c * c - dc * dc) / (2.0 * c * c)
        return -self.a / (2.0 * np.asarray(u, dtype=float) ** 2)

    def speed_x(self, u, R, S):
        """Spatial derivative of the speed, c'(u) u_x with u_x = (R-S)/(2c)."""
        return self.k(u) * (R - S)

    def sources(self, u, R, S):
        k = self.k(u)
        N1 = k * (R * R - R * S)
        N2 = k * (S * S - R * S)
        if self.flux.is_zero:
            L = np.zeros_like(N1)
        else:
            L = self.flux(u) * (R - S) / (2.0 * self.c(u))
        return N1, N2, L

    def source_partials(self, u, R, S):
        """Partial derivatives of N1, N2, L with respect to (u, R, S)."""
        k, dk = self.k(u), self.dk(u)
        out = {
            "N1u": dk * (R * R - R * S), "N1R": k * (2.0 * R - S), "N1S": -k * R,
            "N2u": dk * (S * S - R * S), "N2R": -k * S, "N2S": k * (2.0 * S - R),
        }
        if self.flux.is_zero:
            z = np.zeros_like(out["N1u"])
            out.update(Lu=z, LR=z, LS=z)
        else:
            F, dF, c, dc = self.flux(u), self.flux.derivative(u), self.c(u), self.dc(u)
            out["Lu"] = (dF * c - F * dc) * (R - S) / (2.0 * c * c)
            out["LR"] = F / (2.0 * c)
            out["LS"] = -F / (2.0 * c)
        return out


def evaluate_sources(u_val: float, R_val: float, S_val: float, spec: ProblemSpec):
    """(N1, N2, L) at a single state; u must be positive."""
    if not u_val > 0:
        raise DegenerateState(f"degenerate state: u={u_val} <= 0")
    N1, N2, L = spec.coefficient.sources(np.float64(u_val), np.float64(R_val), np.float64(S_val))
    return float(N1), float(N2), float(L)


# ---------------------------------------------------------------- admissibility

@dataclass
class AssumptionReport:
    passed: bool
    measured_c1: float
    measured_c2: float
    measured_c3: float
    measured_c4: float
    measured_B1: float
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "c1": self.measured_c1, "c2": self.measured_c2,
            "c3": self.measured_c3, "c4": self.measured_c4, "B1": self.measured_B1,
            "violations": [list(v) for v in self.violations],
        }


def _initial_profiles(spec: ProblemSpec, x: np.ndarray) -> dict:
    coef = spec.coefficient
    u0 = spec.u0(x)
    du0 = spec.u0.derivative()(x)
    d2u0 = spec.u0.derivative(2)(x)
    u1 = spec.u1(x)
    du1 = spec.u1.derivative()(x)
    with np.errstate(all="ignore"):
        c0 = coef.c(u0)
        flux_term = c0 * du0
        dflux_term = coef.dc(u0) * du0 * du0 + c0 * d2u0
    return {"u0": u0, "du0": du0, "u1": u1, "du1": du1,
            "R0": u1 + flux_term, "S0": u1 - flux_term,
            "dR0": du1 + dflux_term, "dS0": du1 - dflux_term,
            "flux_term": flux_term}


def validate_assumptions(spec: ProblemSpec, probe_grid: Grid1D,
                         floor: float = 1e-12, cap: float = 1e12) -> AssumptionReport:
    """Measure the decay constants of the initial data on ``probe_grid``.

    Every pointwise check is a per-node condition (positivity, finiteness,
    weighted lower bound above ``floor``, weighted upper bounds below
    ``cap``), so adding probe points can only add violations. The exponent
    inequalities are checked independently of the grid: alpha <= beta when
    a <= 1 and a*alpha <= beta when a >= 1.
    """
    x = probe_grid.nodes
    w = bracket_weight(x)
    a, alpha, beta, gamma = spec.a, spec.alpha, spec.beta, spec.gamma
    p = _initial_profiles(spec, x)
    violations = []

    def worst(cond_id, ratio):
        i = int(np.argmax(ratio))
        violations.append((cond_id, float(x[i]), float(ratio[i])))

    for key in ("u0", "du0", "u1", "du1", "R0", "S0", "dR0", "dS0"):
        bad = ~np.isfinite(p[key])
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            violations.append(("non-finite", float(x[i]), float("nan")))
            break
    finite = not violations
    if np.any(p["u0"] <= 0):
        i = int(np.argmin(p["u0"]))
        violations.append(("positivity", float(x[i]), float(p["u0"][i])))

    with np.errstate(all="ignore"):
        weighted_u0 = w ** alpha * p["u0"]
        c1 = float(np.min(weighted_u0)) if finite else float("nan")
        c2 = float(np.max(p["u0"])) if finite else float("nan")
        r2 = w ** beta * np.maximum(np.abs(p["R0"]), np.abs(p["S0"]))
        r4 = w ** gamma * np.maximum(np.abs(p["dR0"]), np.abs(p["dS0"]))
        b1 = w ** beta * np.abs(p["flux_term"])
    c3 = float(np.max(r2)) if finite else float("nan")
    c4 = float(np.max(r4)) if finite else float("nan")
    B1 = float(np.max(b1)) if finite else float("nan")

    if finite:
        if c1 < floor and not any(v[0] == "positivity" for v in violations):
            i = int(np.argmin(weighted_u0))
            violations.append(("ini-con", float(x[i]), float(weighted_u0[i])))
        if c3 > cap:
            worst("ini-con2", r2)
        if c4 > cap:
            worst("ini-con4", r4)
        if B1 > cap:
            worst("0con5", b1)
    if a <= 1 and alpha > beta:
        violations.append(("ab1", float("nan"), alpha / beta if beta > 0 else float("inf")))
    if a >= 1 and a * alpha > beta:
        violations.append(("ab2", float("nan"), a * alpha / beta if beta > 0 else float("inf")))
    return AssumptionReport(not violations, c1, c2, c3, c4, B1, violations)


@dataclass
class LeviReport:
    passed: bool
    measured_C_K: float
    flux_ratio_sup: float
    flux_derivative_ratio_sup: float
    coefficient_constants: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "C_K": self.measured_C_K,
                "flux_ratio_sup": self.flux_ratio_sup,
                "flux_derivative_ratio_sup": self.flux_derivative_ratio_sup,
                "coefficient_constants": self.coefficient_constants,
                "failures": list(self.failures)}


def _grows_toward_zero(ratio: np.ndarray, theta: np.ndarray, eps: float) -> bool:
    """Ratio increases strictly as theta decreases over the last decade."""
    sel = theta <= 10.0 * eps
    r = ratio[sel][np.argsort(theta[sel])]
    if r.size < 3:
        return False
    return bool(np.all(np.diff(r) < 0) and r[0] > r[-1] * (1.0 + 1e-6))


def check_levi(spec: ProblemSpec, n_samples: int = 2001, K_bound: float | None = None,
               cap: float = 1e8) -> LeviReport:
    """Sample |F|/theta^a and |F'|/theta^(a-1) on log-spaced theta in (K 1e-8, K].

    In general mode the bounds on c, c', c'' against theta^a, theta^(a-1),
    theta^(a-2) are sampled as well. A ratio above ``cap`` or one growing
    monotonically toward theta -> 0 over the smallest decade fails the check.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    K = float(K_bound if K_bound is not None else (spec.K_bound or 1.0))
    if not K > 0:
        raise ValueError("K_bound must be > 0")
    eps = K * 1e-8
    theta = np.logspace(np.log10(eps), np.log10(K), n_samples)
    a = spec.a
    failures = []
    F = spec.flux(theta)
    dF = spec.flux.derivative(theta)
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(dF))):
        raise ValueError("flux not C¹ on (0,K]")
    r_f = np.abs(F) / theta ** a
    r_df = np.abs(dF) / theta ** (a - 1.0)
    for name, r in (("f-con", r_f), ("f-con2", r_df)):
        if np.max(r) > cap:
            failures.append((name, "ratio exceeds cap", float(np.max(r))))
        elif _grows_toward_zero(r, theta, eps):
            failures.append((name, "ratio grows as theta -> 0", float(np.max(r))))

    coef_constants = {}
    if spec.coefficient_mode is CoefficientMode.GENERAL:
        coef = spec.coefficient
        with np.errstate(all="ignore"):
            c, dc, d2c = coef.c(theta), coef.dc(theta), coef.d2c(theta)
        if not all(np.all(np.isfinite(v)) for v in (c, dc, d2c)):
            raise ValueError("coefficient c not C² on (0,K]")
        lower = c / theta ** a
        checks = {
            "c-con1-lower": lower,
            "c-con1-upper": c,
            "c-con2": np.abs(dc) / theta ** (a - 1.0),
            "c-con3": np.abs(d2c) / theta ** (a - 2.0),
        }
        coef_constants = {"C1": float(np.min(lower)), "C2": float(np.max(c)),
                          "C3": float(np.max(checks["c-con2"])), "C4": float(np.max(checks["c-con3"]))}
        if np.min(lower) <= 0 or _grows_toward_zero(1.0 / np.maximum(lower, 1e-300), theta, eps):
            failures.append(("c-con1", "c(theta)/theta^a not bounded below", float(np.min(lower))))
        for name in ("c-con1-upper", "c-con2", "c-con3"):
            r = checks[name]
            if np.max(r) > cap:
                failures.append((name, "ratio exceeds cap", float(np.max(r))))
            elif _grows_toward_zero(r, theta, eps):
                failures.append((name, "ratio grows as theta -> 0", float(np.max(r))))
    sup_f, sup_df = float(np.max(r_f)), float(np.max(r_df))
    return LeviReport(not failures, max(sup_f, sup_df), sup_f, sup_df, coef_constants, failures)


# ---------------------------------------------------------------- initial data

def initial_invariants(spec: ProblemSpec, grid: Grid1D,
                       interpolation=Interpolation.CUBIC_MONOTONE):
    """R0 = u1 + c(u0) u0' and S0 = u1 - c(u0) u0' from the symbolic data."""
    fields = initial_fields(spec, grid, interpolation)
    return fields["R"], fields["S"]


def initial_fields(spec: ProblemSpec, grid: Grid1D,
                   interpolation=Interpolation.CUBIC_MONOTONE) -> dict:
    """u0, R0, S0 and their x-derivatives V0 = R0', W0 = S0' on ``grid``."""
    x = grid.nodes
    u0 = spec.u0(x)
    if spec.coefficient_mode is CoefficientMode.GENERAL and np.any(u0 <= 0):
        i = int(np.argmin(u0))
        raise DegenerateState(f"degenerate node at x={x[i]:.6g}")
    p = _initial_profiles(spec, x)
    names = {"u": "u0", "R": "R0", "S": "S0", "V": "dR0", "W": "dS0"}
    return {k: ScalarField1D(grid, p[v], interpolation) for k, v in names.items()}
