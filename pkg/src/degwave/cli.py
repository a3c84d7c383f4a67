"""Command-line entry point: validate, solve, diagnose, converge, oracle-compare.

Exit codes: 0 success, 2 admissibility failure or invalid config,
3 breakdown detected, 4 contraction failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .characteristics import SpeedProvider, jacobian_bound_report, lipschitz_probe, random_probe_samples
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (BreakdownKind, conservation_form_residual, dalembert, decay_report,
                          detect_breakdown, sign_preservation_check)
from .output import emit_plot, write_solution_csv
from .picard import SlabPolicy, Solution, Termination, auto_slab_length, continue_solution, pde_residual
from .problem import check_levi, initial_fields, validate_assumptions

log = logging.getLogger("degwave")

EXIT_OK, EXIT_ADMISSIBILITY, EXIT_BREAKDOWN, EXIT_CONTRACTION = 0, 2, 3, 4
COMMANDS = ("validate", "solve", "diagnose", "converge", "oracle-compare")


def _exit_for(termination: Termination) -> int:
    if termination is Termination.REACHED_TARGET_T:
        return EXIT_OK
    if termination is Termination.CONTRACTION_FAILURE:
        return EXIT_CONTRACTION
    return EXIT_BREAKDOWN


def _admissibility(cfg: RunConfig) -> dict:
    spec = cfg.problem
    assumptions = validate_assumptions(spec, cfg.grid)
    levi = check_levi(spec, K_bound=spec.k_bound(cfg.grid))
    return {"assumptions": assumptions.to_dict(), "levi": levi.to_dict(),
            "gamma": spec.gamma, "passed": assumptions.passed and levi.passed}


def _policy(cfg: RunConfig, length=None) -> SlabPolicy:
    return SlabPolicy(cfg.time.initial_slab_length if length is None else length, cfg.time.levels_per_slab)


def _solve(cfg: RunConfig, grid=None, policy=None) -> Solution:
    return continue_solution(
        cfg.problem, grid or cfg.grid, cfg.time.T_target, policy or _policy(cfg),
        tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, interpolation=cfg.solver.interpolation,
        degeneracy_threshold=cfg.solver.degeneracy_threshold)


class _Artifacts:
    def __init__(self, cfg: RunConfig, out_dir):
        self.dir = Path(out_dir if out_dir is not None else cfg.output.directory)
        self.formats = set(cfg.output.formats)

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def json(self, name, payload):
        if "json" in self.formats:
            self._path(name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def csv(self, name, solution):
        if "csv" in self.formats and solution.slabs:
            write_solution_csv(solution, self._path(name))

    def svg(self, name, series, **kw):
        if "svg" in self.formats:
            emit_plot(series, self._path(name), **kw)


def _snapshots(solution: Solution, count: int = 5) -> dict:
    if not solution.slabs:
        return {}
    u, times, x = solution.stacked("u"), solution.times, solution.grid.nodes
    picks = sorted(set(np.linspace(0, len(times) - 1, count).round().astype(int).tolist()))
    return {f"t={times[j]:.4g}": (x, u[j]) for j in picks}


# ---------------------------------------------------------------- commands

def cmd_validate(cfg, art, seed):
    report = _admissibility(cfg)
    art.json("validate.json", report)
    print(f"assumptions passed: {report['assumptions']['passed']}")
    for v in report["assumptions"]["violations"]:
        print(f"  violation {v[0]} at x={v[1]:.6g} (ratio {v[2]:.4g})")
    print(f"levi passed: {report['levi']['passed']}  C_K={report['levi']['C_K']:.6g}")
    for f in report["levi"]["failures"]:
        print(f"  levi failure {f[0]}: {f[1]}")
    return EXIT_OK if report["passed"] else EXIT_ADMISSIBILITY


def cmd_solve(cfg, art, seed):
    if not _admissibility(cfg)["passed"]:
        print("initial data not admissible; run 'validate' for details")
        return EXIT_ADMISSIBILITY
    sol = _solve(cfg)
    summary = sol.summary()
    art.json("solve.json", summary)
    art.csv("solution.csv", sol)
    art.svg("solution.svg", _snapshots(sol), title="u(t, x)", ylabel="u")
    print(f"termination: {sol.termination.value} at t={sol.t_final:.6g}; {len(sol.slabs)} slabs")
    if sol.message:
        print(f"  {sol.message}")
    return _exit_for(sol.termination)


def cmd_diagnose(cfg, art, seed):
    if not _admissibility(cfg)["passed"]:
        print("initial data not admissible; run 'validate' for details")
        return EXIT_ADMISSIBILITY
    spec, dcfg = cfg.problem, cfg.diagnostics
    sol = _solve(cfg)
    report = {"termination": sol.termination.value, "message": sol.message, "t_final": sol.t_final}
    if sol.slabs:
        decay = decay_report(sol, margin=dcfg.margin)
        flag = detect_breakdown(sol, blowup_cap=dcfg.blowup_cap,
                                degeneracy_floor_fraction=dcfg.degeneracy_floor_fraction)
        report.update(decay=decay.to_dict(), breakdown=flag.to_dict(),
                      pde_residual_max=pde_residual(sol).max,
                      jacobians=[jacobian_bound_report(s, spec).to_dict() for s in sol.slabs])
        try:
            report["conservation"] = conservation_form_residual(sol).to_dict()
        except ValueError as exc:
            report["conservation"] = {"skipped": str(exc)}
        if spec.flux.is_zero:
            report["sign"] = sign_preservation_check(sol)._asdict()
        first = sol.slabs[0]
        g = cfg.grid
        roi = dcfg.region_of_interest or (g.x_min + 0.25 * (g.x_max - g.x_min),
                                          g.x_max - 0.25 * (g.x_max - g.x_min))
        rng = np.random.default_rng(seed)
        samples = random_probe_samples(rng, dcfg.lipschitz_samples, (first.t0, first.t1), roi)
        report["lipschitz"] = lipschitz_probe(SpeedProvider.from_slab(first, spec), samples, first.dt).to_dict()
        art.svg("decay.svg", {"C1": (decay.times, decay.C1), "C2": (decay.times, decay.C2),
                              "C3": (decay.times, decay.C3), "C4": (decay.times, decay.C4)},
                title="weighted decay constants", xlabel="t")
        print(f"decay flags: {decay.passed}")
        print(f"breakdown: {flag.kind.value}" + ("" if flag.kind is BreakdownKind.NONE
                                                 else f" at t={flag.time:.6g}, x={flag.x:.6g}"))
    else:
        flag = None
    art.json("diagnose.json", report)
    print(f"termination: {sol.termination.value} at t={sol.t_final:.6g}")
    code = _exit_for(sol.termination)
    if code == EXIT_OK and flag is not None and flag.kind is not BreakdownKind.NONE:
        code = EXIT_BREAKDOWN
    return code


def _order(e_coarse, e_fine):
    if e_coarse > 0 and e_fine > 0:
        return math.log2(e_coarse / e_fine)
    return float("nan")


def cmd_converge(cfg, art, seed):
    if not _admissibility(cfg)["passed"]:
        print("initial data not admissible; run 'validate' for details")
        return EXIT_ADMISSIBILITY
    spec = cfg.problem
    length = cfg.time.initial_slab_length
    if length == "auto":
        C_K = 0.0 if spec.flux.is_zero else check_levi(spec, K_bound=spec.k_bound(cfg.grid)).measured_C_K
        length = auto_slab_length(spec, initial_fields(spec, cfg.grid), C_K)
    grids, m = [cfg.grid], cfg.time.levels_per_slab
    levels = [m]
    for _ in range(2):
        grids.append(grids[-1].refined(2))
        levels.append(2 * (levels[-1] - 1) + 1)
    oracle = spec.a == 0 and spec.flux.is_zero
    rows, finals = [], []
    for g, lv in zip(grids, levels):
        sol = _solve(cfg, grid=g, policy=SlabPolicy(length, lv))
        if sol.termination is not Termination.REACHED_TARGET_T:
            print(f"h={g.h:.4g}: {sol.termination.value}: {sol.message}")
            return _exit_for(sol.termination)
        u = sol.stacked("u")[-1]
        row = {"h": g.h, "dt": sol.slabs[0].dt, "residual": pde_residual(sol).max}
        if oracle:
            row["oracle_error"] = float(np.max(np.abs(u - dalembert(spec.u0, spec.u1, g.nodes, sol.t_final))))
        rows.append(row)
        finals.append(u)
    d1 = float(np.max(np.abs(finals[0] - finals[1][::2])))
    d2 = float(np.max(np.abs(finals[1][::2] - finals[2][::4])))
    result = {"rows": rows, "self_differences": [d1, d2], "observed_order": _order(d1, d2),
              "residual_ratios": [rows[0]["residual"] / rows[1]["residual"],
                                  rows[1]["residual"] / rows[2]["residual"]],
              "slab_length": length}
    if oracle:
        result["oracle_orders"] = [_order(rows[0]["oracle_error"], rows[1]["oracle_error"]),
                                   _order(rows[1]["oracle_error"], rows[2]["oracle_error"])]
    art.json("converge.json", result)
    hs = np.array([r["h"] for r in rows])
    series = {"PDE residual": (np.log2(hs), np.log2([r["residual"] for r in rows]))}
    if oracle:
        series["oracle error"] = (np.log2(hs), np.log2([r["oracle_error"] for r in rows]))
    art.svg("converge.svg", series, title="refinement study", xlabel="log2 h", ylabel="log2 value")
    print(f"{'h':>10} {'dt':>10} {'residual':>12}" + (f" {'oracle err':>12}" if oracle else ""))
    for r in rows:
        line = f"{r['h']:10.4g} {r['dt']:10.4g} {r['residual']:12.4e}"
        print(line + (f" {r['oracle_error']:12.4e}" if oracle else ""))
    print(f"observed order (self-convergence): {result['observed_order']:.3f}")
    return EXIT_OK


def cmd_oracle_compare(cfg, art, seed):
    spec = cfg.problem
    if spec.a != 0 or not spec.flux.is_zero:
        print("oracle-compare needs a = 0 and F = 0 (constant-speed linear case)")
        return EXIT_ADMISSIBILITY
    sol = _solve(cfg)
    x = cfg.grid.nodes
    errors = [float(np.max(np.abs(u - dalembert(spec.u0, spec.u1, x, t))))
              for t, u in zip(sol.times, sol.stacked("u"))] if sol.slabs else []
    result = {"termination": sol.termination.value, "sup_error": max(errors, default=float("nan")),
              "times": sol.times.tolist() if sol.slabs else [], "errors": errors}
    art.json("oracle.json", result)
    if sol.slabs:
        art.svg("oracle.svg", {"sup error": (sol.times, errors)}, title="error against the closed form",
                xlabel="t")
    print(f"sup error against the closed form: {result['sup_error']:.4e}")
    return _exit_for(sol.termination)


_DISPATCH = {"validate": cmd_validate, "solve": cmd_solve, "diagnose": cmd_diagnose,
             "converge": cmd_converge, "oracle-compare": cmd_oracle_compare}


def run_command(command: str, config: RunConfig, out_dir=None, seed=None) -> int:
    """Run one workflow and write its artifacts; returns the exit code."""
    if command not in _DISPATCH:
        raise ValueError(f"unknown command {command!r}; expected one of {COMMANDS}")
    seed = config.seed if seed is None else int(seed)
    return _DISPATCH[command](config, _Artifacts(config, out_dir), seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="degwave", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="run configuration (JSON)")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=None, help="seed for sampled probes")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return run_command(args.command, cfg, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
