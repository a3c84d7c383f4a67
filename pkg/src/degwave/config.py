"""JSON run configuration: parsing, defaults and cross-validation.

A config file has the sections ``problem``, ``grid``, ``time``, ``solver``,
``diagnostics`` and ``output`` plus an optional top-level ``seed``. See the
README for the full schema. Structural problems (bad JSON, wrong types,
unknown keys) are reported at parse time with the offending line or key;
semantic problems (exponent constraints, empty intervals) are collected and
reported together.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expressions import Expression, ExpressionError
from .fields import Grid1D, Interpolation
from .problem import CoefficientMode, Flux, ProblemSpec, derive_gamma

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class TimeConfig:
    T_target: float
    levels_per_slab: int = 65
    initial_slab_length: float | str = "auto"


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50
    interpolation: Interpolation = Interpolation.CUBIC_MONOTONE
    degeneracy_threshold: float | None = None


@dataclass
class DiagnosticsConfig:
    blowup_cap: float = 1e6
    degeneracy_floor_fraction: float = 1e-3
    margin: float = 4.0
    lipschitz_samples: int = 100
    region_of_interest: tuple | None = None


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "json", "svg")


@dataclass
class RunConfig:
    problem: ProblemSpec
    grid: Grid1D
    time: TimeConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    warnings: list = field(default_factory=list)


_SECTIONS = {
    "problem": {"a", "u0", "u1", "alpha", "beta", "flux", "coefficient_mode", "c_expr", "K_bound", "gamma"},
    "grid": {"x_min", "x_max", "n_points"},
    "time": {"T_target", "levels_per_slab", "initial_slab_length"},
    "solver": {"tol", "max_iter", "interpolation", "degeneracy_threshold"},
    "diagnostics": {"blowup_cap", "degeneracy_floor_fraction", "margin", "lipschitz_samples",
                    "region_of_interest"},
    "output": {"directory", "formats"},
}
_FORMATS = {"csv", "json", "svg"}


class _Reader:
    """Typed access to a nested dict that records every failure by key."""

    def __init__(self):
        self.errors = []

    def section(self, raw, name, required=False):
        sec = raw.get(name)
        if sec is None:
            if required:
                self.errors.append(f"{name}: missing section")
            return {}
        if not isinstance(sec, dict):
            self.errors.append(f"{name}: expected an object")
            return {}
        for key in sorted(set(sec) - _SECTIONS[name]):
            self.errors.append(f"{name}.{key}: unknown key")
        return sec

    def number(self, sec, path, key, default=None, required=False, integer=False, lo=None, strict=False):
        if key not in sec or sec[key] is None:
            if required:
                self.errors.append(f"{path}.{key}: missing")
            return default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not float(v).is_integer()):
            kind = "an integer" if integer else "a number"
            self.errors.append(f"{path}.{key}: expected {kind}, got {v!r}")
            return default
        if not np.isfinite(v):
            self.errors.append(f"{path}.{key}: must be finite")
            return default
        if lo is not None and (v <= lo if strict else v < lo):
            self.errors.append(f"{path}.{key}: must be {'>' if strict else '>='} {lo}, got {v!r}")
            return default
        return int(v) if integer else float(v)

    def string(self, sec, path, key, default=None, required=False):
        if key not in sec or sec[key] is None:
            if required:
                self.errors.append(f"{path}.{key}: missing")
            return default
        v = sec[key]
        if not isinstance(v, (str, int, float)) or isinstance(v, bool):
            self.errors.append(f"{path}.{key}: expected a string, got {v!r}")
            return default
        return str(v)


def _parse_flux(raw, r: _Reader):
    if raw is None:
        return Flux.zero()
    if not isinstance(raw, dict):
        r.errors.append("problem.flux: expected an object")
        return Flux.zero()
    kind = raw.get("kind", "zero")
    extra = set(raw) - {"kind", "amplitude", "exponent", "expr"}
    for key in sorted(extra):
        r.errors.append(f"problem.flux.{key}: unknown key")
    if kind == "zero":
        return Flux.zero()
    if kind == "power":
        lam = r.number(raw, "problem.flux", "amplitude", required=True)
        b = r.number(raw, "problem.flux", "exponent", required=True, lo=0)
        return Flux.power(lam, b) if lam is not None and b is not None else Flux.zero()
    if kind == "expression":
        expr = r.string(raw, "problem.flux", "expr", required=True)
        if expr is None:
            return Flux.zero()
        try:
            Expression.parse(expr, var="theta")
        except ExpressionError as exc:
            r.errors.append(f"problem.flux.expr: {exc}")
            return Flux.zero()
        return Flux("expression", expr=expr)
    r.errors.append(f"problem.flux.kind: expected zero, power or expression, got {kind!r}")
    return Flux.zero()


def parse_config(raw: dict) -> RunConfig:
    """Build a ``RunConfig`` from an already-decoded JSON object."""
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected an object"])
    r = _Reader()
    for key in sorted(set(raw) - set(_SECTIONS) - {"seed"}):
        r.errors.append(f"{key}: unknown section")
    p = r.section(raw, "problem", required=True)
    g = r.section(raw, "grid", required=True)
    t = r.section(raw, "time", required=True)
    s = r.section(raw, "solver")
    d = r.section(raw, "diagnostics")
    o = r.section(raw, "output")

    a = r.number(p, "problem", "a", required=True, lo=0)
    alpha = r.number(p, "problem", "alpha", 0.0, lo=0)
    beta = r.number(p, "problem", "beta", 0.0, lo=0)
    gamma = r.number(p, "problem", "gamma", None, lo=0)
    u0 = r.string(p, "problem", "u0", required=True)
    u1 = r.string(p, "problem", "u1", "0")
    mode = r.string(p, "problem", "coefficient_mode", "power")
    if mode not in ("power", "general"):
        r.errors.append(f"problem.coefficient_mode: expected power or general, got {mode!r}")
        mode = "power"
    c_expr = r.string(p, "problem", "c_expr")
    K = r.number(p, "problem", "K_bound", None, lo=0, strict=True)
    flux = _parse_flux(p.get("flux"), r)
    for key, src, var in (("u0", u0, "x"), ("u1", u1, "x"), ("c_expr", c_expr, "theta")):
        if src is not None:
            try:
                Expression.parse(src, var=var)
            except ExpressionError as exc:
                r.errors.append(f"problem.{key}: {exc}")

    x_min = r.number(g, "grid", "x_min", required=True)
    x_max = r.number(g, "grid", "x_max", required=True)
    n_points = r.number(g, "grid", "n_points", required=True, integer=True, lo=3)

    T = r.number(t, "time", "T_target", required=True, lo=0, strict=True)
    m = r.number(t, "time", "levels_per_slab", 65, integer=True, lo=3)
    slab = t.get("initial_slab_length", "auto")
    if slab != "auto":
        slab = r.number(t, "time", "initial_slab_length", "auto", lo=0, strict=True)

    tol = r.number(s, "solver", "tol", 1e-10, lo=0, strict=True)
    max_iter = r.number(s, "solver", "max_iter", 50, integer=True, lo=1)
    interp = r.string(s, "solver", "interpolation", "cubic_monotone")
    try:
        interp = Interpolation(interp)
    except ValueError:
        r.errors.append(f"solver.interpolation: expected linear or cubic_monotone, got {interp!r}")
        interp = Interpolation.CUBIC_MONOTONE
    deg = r.number(s, "solver", "degeneracy_threshold", None)

    diag = DiagnosticsConfig(
        blowup_cap=r.number(d, "diagnostics", "blowup_cap", 1e6, lo=0, strict=True),
        degeneracy_floor_fraction=r.number(d, "diagnostics", "degeneracy_floor_fraction", 1e-3,
                                           lo=0, strict=True),
        margin=r.number(d, "diagnostics", "margin", 4.0, lo=0, strict=True),
        lipschitz_samples=r.number(d, "diagnostics", "lipschitz_samples", 100, integer=True, lo=0),
    )
    roi = d.get("region_of_interest")
    if roi is not None:
        if (not isinstance(roi, list) or len(roi) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in roi)):
            r.errors.append("diagnostics.region_of_interest: expected [lo, hi]")
        else:
            diag.region_of_interest = (float(roi[0]), float(roi[1]))

    directory = r.string(o, "output", "directory", "out")
    formats = o.get("formats", ["csv", "json", "svg"])
    if not isinstance(formats, list) or not set(formats) <= _FORMATS:
        r.errors.append(f"output.formats: expected a subset of {sorted(_FORMATS)}")
        formats = ["csv", "json", "svg"]
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        r.errors.append(f"seed: expected a non-negative integer, got {seed!r}")
        seed = 0

    if r.errors:
        raise ConfigError(r.errors)

    # semantic cross-checks, all reported at once
    problems = []
    if x_min >= x_max:
        problems.append(f"grid: need x_min < x_max, got [{x_min}, {x_max}]")
    if a <= 1 and alpha > beta:
        problems.append(f"ab1: alpha <= beta required for a <= 1 (alpha={alpha}, beta={beta})")
    if a >= 1 and a * alpha > beta:
        problems.append(f"ab2: a*alpha <= beta required for a >= 1 (a*alpha={a * alpha}, beta={beta})")
    derived = derive_gamma(a, alpha)
    if gamma is not None and gamma != derived:
        problems.append(f"problem.gamma: {gamma} disagrees with derived value {derived}")
    if mode == "general" and not c_expr:
        problems.append("problem.c_expr: required in general coefficient mode")
    if diag.region_of_interest and diag.region_of_interest[0] >= diag.region_of_interest[1]:
        problems.append("diagnostics.region_of_interest: need lo < hi")
    if problems:
        raise ConfigError(problems)

    spec = ProblemSpec(a, u0, u1, alpha, beta, flux, CoefficientMode(mode), c_expr, K, derived)
    cfg = RunConfig(
        problem=spec,
        grid=Grid1D(x_min, x_max, n_points),
        time=TimeConfig(T, m, slab),
        solver=SolverConfig(tol, max_iter, interp, deg),
        diagnostics=diag,
        output=OutputConfig(directory, tuple(formats)),
        seed=seed,
    )
    cfg.warnings = padding_warnings(cfg)
    for w in cfg.warnings:
        log.warning(w)
    return cfg


def padding_warnings(cfg: RunConfig) -> list:
    """Warn when the grid edges sit closer to the region of interest than the
    largest possible travel distance c(sup u0) T + 2h."""
    g = cfg.grid
    roi = cfg.diagnostics.region_of_interest
    if roi is None:
        quarter = 0.25 * (g.x_max - g.x_min)
        roi = (g.x_min + quarter, g.x_max - quarter)
    sup_u0 = float(np.max(cfg.problem.u0(g.nodes)))
    with np.errstate(all="ignore"):
        reach = float(cfg.problem.coefficient.c(np.array(sup_u0))) * cfg.time.T_target + 2.0 * g.h
    out = []
    for side, gap in (("left", roi[0] - g.x_min), ("right", g.x_max - roi[1])):
        if not gap >= reach:
            out.append(f"padding on the {side} is {gap:.4g} < required {reach:.4g}; "
                       "characteristics may reach the grid edge")
    return out


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return parse_config(raw)
