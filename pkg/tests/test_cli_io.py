import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degwave.cli import main, run_command
from degwave.config import ConfigError, load_config, parse_config
from degwave.fields import Grid1D
from degwave.output import (CSV_COLUMNS, emit_plot, format_number, read_solution_csv,
                            write_solution_csv)
from degwave.picard import SlabPolicy, continue_solution
from degwave.problem import ProblemSpec


def base(**over):
    raw = {"problem": {"a": 0, "u0": "2 + exp(-x**2)", "u1": "0"},
           "grid": {"x_min": -8, "x_max": 8, "n_points": 161},
           "time": {"T_target": 0.2, "levels_per_slab": 11, "initial_slab_length": 0.1}}
    for key, val in over.items():
        raw[key] = {**raw.get(key, {}), **val}
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


# ---------------------------------------------------------------- config

def test_defaults():
    cfg = parse_config({"problem": {"a": 1, "u0": "1"}, "grid": {"x_min": -1, "x_max": 1, "n_points": 11},
                        "time": {"T_target": 1}})
    assert cfg.time.levels_per_slab == 65 and cfg.time.initial_slab_length == "auto"
    assert cfg.solver.tol == 1e-10 and cfg.solver.max_iter == 50
    assert cfg.diagnostics.margin == 4 and cfg.diagnostics.lipschitz_samples == 100
    assert cfg.seed == 0 and cfg.output.formats == ("csv", "json", "svg")


def test_ab2_rejected():
    with pytest.raises(ConfigError, match="ab2"):
        parse_config(base(problem={"a": 2, "u0": "1", "alpha": 1, "beta": 1}))


def test_negative_points_rejected():
    with pytest.raises(ConfigError, match="n_points"):
        parse_config(base(grid={"n_points": -5}))


def test_all_problems_listed_at_once():
    with pytest.raises(ConfigError) as info:
        parse_config(base(grid={"n_points": 1}, time={"T_target": -1}, solver={"tol": 0}, extra={}))
    text = " ".join(info.value.problems)
    for key in ("n_points", "T_target", "tol", "extra"):
        assert key in text
    assert len(info.value.problems) >= 4


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "problem": {"a": 0,\n  }\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_bad_expression_rejected():
    with pytest.raises(ConfigError, match="u0"):
        parse_config(base(problem={"u0": "__import__('os')"}))


def test_padding_warning():
    cfg = parse_config(base(problem={"u0": "2"}, time={"T_target": 5.0}))
    assert any("padding" in w for w in cfg.warnings)


# ---------------------------------------------------------------- commands

@pytest.mark.parametrize("command, artifact", [("validate", "validate.json"), ("solve", "solution.csv"),
                                               ("diagnose", "diagnose.json"), ("converge", "converge.json"),
                                               ("oracle-compare", "oracle.json")])
def test_commands_succeed(tmp_path, command, artifact):
    code = run_command(command, parse_config(base()), out_dir=tmp_path)
    assert code == 0
    assert (tmp_path / artifact).exists()


def test_oracle_compare_error_small(tmp_path):
    run_command("oracle-compare", parse_config(base()), out_dir=tmp_path)
    assert json.loads((tmp_path / "oracle.json").read_text())["sup_error"] <= 5e-4


def test_oracle_compare_needs_linear_case(tmp_path):
    cfg = parse_config(base(problem={"a": 1}))
    assert run_command("oracle-compare", cfg, out_dir=tmp_path) == 2


def test_breakdown_exit_code(tmp_path):
    raw = base(problem={"a": 1, "u0": "1", "u1": "-2*exp(-x**2)"}, grid={"x_min": -10, "x_max": 10, "n_points": 201},
               time={"T_target": 2.0, "levels_per_slab": 9, "initial_slab_length": "auto"})
    assert run_command("solve", parse_config(raw), out_dir=tmp_path) == 3


def test_exit_code_independent_of_formats(tmp_path):
    codes = []
    for k, fmts in enumerate((["csv", "json", "svg"], [], ["json"])):
        cfg = parse_config(base(output={"formats": fmts}))
        codes.append(run_command("diagnose", cfg, out_dir=tmp_path / str(k)))
    assert len(set(codes)) == 1
    assert not (tmp_path / "1").exists() or not any((tmp_path / "1").iterdir())


def test_main_invalid_config_exit(tmp_path, capsys):
    p = write(tmp_path, base(problem={"a": 2, "u0": "1", "alpha": 1, "beta": 1}))
    assert main(["validate", "--config", str(p)]) == 2
    assert "ab2" in capsys.readouterr().err


def test_main_missing_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 2


def test_console_entry(tmp_path):
    p = write(tmp_path, base())
    out = subprocess.run([sys.executable, "-m", "degwave.cli", "validate", "--config", str(p),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "assumptions passed: True" in out.stdout


# ---------------------------------------------------------------- CSV

@pytest.fixture(scope="module")
def small_solution():
    return continue_solution(ProblemSpec(1.0, "1", "-0.1"), Grid1D(-1, 1, 5), 0.5, SlabPolicy(0.25, 3))


def test_format_number():
    assert format_number(0.0) == "0" and format_number(-0.0) == "0"
    assert format_number(2.0) == "2" and format_number(0.1) == "0.1"
    assert format_number(1e-300) == "1e-300"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_number_round_trip(v):
    assert float(format_number(v)) == v


def test_csv_example_row(tmp_path, small_solution):
    p = write_solution_csv(small_solution, tmp_path / "s.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + small_solution.times.size * 5
    row = [float(v) for v in lines[1 + 2 * 5 + 2].split(",")]
    assert row == pytest.approx([0.25, 0, 0.975, -0.1, -0.1, -0.1, 0, 0, 0], abs=1e-15)


def test_csv_round_trip(tmp_path, small_solution):
    data = read_solution_csv(write_solution_csv(small_solution, tmp_path / "s.csv"))
    np.testing.assert_allclose(data["u"].reshape(-1, 5), small_solution.stacked("u"), rtol=1e-12)
    np.testing.assert_array_equal(np.unique(data["t"]), small_solution.times)


def test_csv_deterministic(tmp_path, small_solution):
    a = write_solution_csv(small_solution, tmp_path / "a.csv").read_bytes()
    b = write_solution_csv(small_solution, tmp_path / "b.csv").read_bytes()
    assert a == b


def test_csv_rejects_wrong_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_solution_csv(p)


# ---------------------------------------------------------------- SVG

def test_svg_empty_series(tmp_path):
    text = emit_plot({}, tmp_path / "e.svg").read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")


def test_svg_constant_series(tmp_path):
    text = emit_plot({"flat": ([0, 1, 2], [3, 3, 3])}, tmp_path / "c.svg").read_text()
    assert "polyline" in text and "nan" not in text


def test_svg_deterministic(tmp_path):
    series = {"a": (np.linspace(0, 1, 20), np.sin(np.linspace(0, 1, 20))), "b & c": ([0, 1], [1, np.nan])}
    a = emit_plot(series, tmp_path / "a.svg", title="t<1").read_bytes()
    b = emit_plot(series, tmp_path / "b.svg", title="t<1").read_bytes()
    assert a == b and b"t&lt;1" in a and b"b &amp; c" in a


def test_svg_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        emit_plot({"a": ([0, 1], [0])}, tmp_path / "x.svg")
