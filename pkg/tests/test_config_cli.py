import math
from pathlib import Path

import numpy as np
import pytest

from fracflow.cli import main, run_config, sweep
from fracflow.config import (
    ConfigError,
    build,
    build_forcing,
    build_u0,
    load_config,
    parse_config,
    parse_value,
    set_field,
    validate,
)
from fracflow.errors import GateError
from fracflow.grid import Interval, build_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """\
problem.geometry = interval(-1, 1)
problem.p = 2
problem.s = 0.5
problem.phi = power(1)
problem.u0 = {u0}
grid.h = 0.1
grid.R_ext = 2
evolution.T_final = 0.2
evolution.N_steps = 10
certificates = {certs}
output_dir = out
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_roundtrip():
    cfg = parse_config(SMALL.format(u0="bump(2)", certs="growth, energy") + "solver.outer_tol = 1e-9\n")
    assert cfg.p == 2.0 and cfg.h == 0.1 and cfg.N_steps == 10
    assert cfg.certificates == ["growth", "energy"]
    assert cfg.solver == {"outer_tol": 1e-9}
    assert cfg.source["grid.h"] == 6


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("problem.p = 2\nproblem.p = 3\n", 2, "problem.p"),
        ("\n\nproblem.q = 1\n", 3, "problem.q"),
        ("problem.p = two\n", 1, "problem.p"),
        ("evolution.N_steps = 1.5\n", 1, "evolution.N_steps"),
        ("# comment\nnot a pair\n", 2, None),
        ("certificates = growth, magic\n", 1, "certificates"),
        ("solver.speed = 3\n", 1, "solver.speed"),
        ("certificate.decay = 1\n", 1, "certificate.decay"),
        ("problem.phi =\n", 1, "problem.phi"),
    ],
)
def test_parse_errors_carry_location(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.key == key
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize(
    "text, expected", [("3", 3.0), ("inf", math.inf), ("0.01, 1", [0.01, 1.0]), ("bump(1)", "bump(1)")]
)
def test_parse_value(text, expected):
    assert parse_value(text) == expected


def test_set_field():
    cfg = parse_config(SMALL.format(u0="bump(1)", certs="growth"))
    assert set_field(cfg, "problem.u0_scale", 2).u0_scale == 2.0
    assert set_field(cfg, "N_steps", 20.0).N_steps == 20
    assert cfg.N_steps == 10
    with pytest.raises(ConfigError):
        set_field(cfg, "problem.phi", 1)
    with pytest.raises(ConfigError):
        set_field(cfg, "N_steps", 2.5)


@pytest.fixture(scope="module")
def grid():
    return build_grid(Interval(-1, 1), 0.25, 2.0)


@pytest.mark.parametrize(
    "spec, check",
    [
        ("zero", lambda u: np.all(u == 0)),
        ("constant(2)", lambda u: np.all(u[u != 0] == 2)),
        ("bump(1)", lambda u: np.max(u) == 1.0 and np.min(u) >= 0),
        ("gaussian(3, 0.2)", lambda u: np.max(u) == 3.0),
        ("random(1)", lambda u: np.min(u) < 0 < np.max(u) and np.max(np.abs(u)) <= 1),
        ("positive_random(1)", lambda u: np.min(u) >= 0),
    ],
)
def test_build_u0(grid, spec, check):
    u = build_u0(spec, grid, seed=3)
    assert np.all(u[grid.exterior] == 0)
    assert check(u)


def test_build_u0_seeded_and_scaled(grid):
    a = build_u0("random(1)", grid, seed=5)
    np.testing.assert_array_equal(a, build_u0("random(1)", grid, seed=5))
    np.testing.assert_array_equal(2 * a, build_u0("random(1)", grid, seed=5, scale=2))
    with pytest.raises(ConfigError):
        build_u0("bump(1, 2)", grid)


def test_build_forcing(grid):
    assert build_forcing("zero", grid).is_zero
    g = build_forcing("decaying(2, 1)", grid)
    assert np.max(g(0.0, grid)) == pytest.approx(2.0)
    assert np.max(g(1.0, grid)) == pytest.approx(2 * math.exp(-1))
    with pytest.raises(ConfigError):
        build_forcing("pulse(1)", grid)


@pytest.mark.parametrize(
    "extra, inequality",
    [
        ("problem.s = 1\n", "0 < s < 1"),
        ("problem.p = 1\n", "p > 1"),
        ("problem.f = linear(100)\n", "tau * omega < 1"),
        ("problem.phi = power(0.5)\ncertificate.level_set.x = 1\n", "m >= 1"),
    ],
)
def test_validate_gates(extra, inequality):
    base = SMALL.format(u0="bump(1)", certs="growth, level_set")
    lines = [ln for ln in base.splitlines() if not any(ln.startswith(e.split("=")[0].strip()) for e in extra.splitlines())]
    cfg = parse_config("\n".join(lines) + "\n" + extra)
    with pytest.raises(GateError) as info:
        validate(cfg)
    assert info.value.inequality == inequality


def test_validate_smoothing_gate():
    text = SMALL.format(u0="bump(1)", certs="decay").replace("power(1)", "power(0.5)")
    with pytest.raises(GateError) as info:
        validate(parse_config(text))
    assert info.value.inequality == "m >= 1"


def test_validate_extinction_radius():
    text = SMALL.format(u0="bump(1)", certs="extinction").replace("power(1)", "power(0.5)")
    with pytest.raises(GateError):
        validate(parse_config(text))


def test_zero_data_run_exits_zero(tmp_path, capsys):
    certs = "growth, comparison, energy, level_set, truncated_growth, decay, exponential_formula"
    text = SMALL.format(u0="zero", certs=certs) + "certificate.decay.p_tilde = 4\n"
    code = main(["run", str(write_cfg(tmp_path, text))])
    assert code == 0
    out = capsys.readouterr().out
    assert "fail" not in out.replace("failing", "")
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert (tmp_path / "out" / "summary.txt").exists()


def test_gate_error_exits_two(tmp_path, capsys):
    text = SMALL.format(u0="bump(1)", certs="decay").replace("power(1)", "power(0.5)")
    code = main(["run", str(write_cfg(tmp_path, text))])
    assert code == 2
    assert "gate violated [m >= 1]" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_missing_p_tilde_exits_two(tmp_path, capsys):
    # p = d/s leaves the embedding exponent free
    text = SMALL.format(u0="bump(1)", certs="decay")
    assert main(["run", str(write_cfg(tmp_path, text))]) == 2
    assert "p_tilde" in capsys.readouterr().err


def test_bad_config_exits_two(tmp_path, capsys):
    code = main(["run", str(write_cfg(tmp_path, "problem.p = 2\nproblem.p = 3\n"))])
    assert code == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_record_every_conflict(tmp_path):
    text = SMALL.format(u0="bump(1)", certs="energy") + "evolution.record_every = 2\n"
    with pytest.raises(ConfigError):
        run_config(parse_config(text, tmp_path), write=False)


def test_solver_failure_exits_three(tmp_path, capsys):
    text = SMALL.format(u0="bump(1)", certs="growth").replace("problem.p = 2", "problem.p = 3")
    text += "solver.inner_max_iter = 1\nsolver.outer_tol = 1e-15\n"
    assert main(["run", str(write_cfg(tmp_path, text))]) == 3
    assert "solver failure at step 1" in capsys.readouterr().err


def test_run_is_deterministic(tmp_path):
    text = SMALL.format(u0="random(1)", certs="growth") + "seed = 7\n"
    path = write_cfg(tmp_path, text)
    main(["run", str(path), "--output-dir", str(tmp_path / "a")])
    main(["run", str(path), "--output-dir", str(tmp_path / "b")])
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "snapshots.txt").read_bytes() == (tmp_path / "b" / "snapshots.txt").read_bytes()


def test_sweep_empty_values(tmp_path):
    cfg = parse_config(SMALL.format(u0="bump(1)", certs="growth"), tmp_path)
    rows, summary = sweep(cfg, "problem.u0_scale", [], write=False)
    assert rows == [] and summary["n"] == 0 and summary["spread"] == {}


def test_sweep_scale_uniformity(tmp_path, capsys):
    text = SMALL.format(u0="bump(1)", certs="decay").replace("power(1)", "power(2)")
    text = text.replace("problem.s = 0.5", "problem.s = 0.75")
    path = write_cfg(tmp_path, text)
    code = main(["sweep", str(path), "--axis", "problem.u0_scale", "--values", "1,2,4"])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "uniform" in out
    assert (tmp_path / "out" / "sweep_problem_u0_scale.txt").exists()


def test_sweep_step_ladder(tmp_path):
    cfg = parse_config(SMALL.format(u0="bump(1)", certs="growth"), tmp_path)
    rows, summary = sweep(cfg, "evolution.N_steps", [10, 20, 40, 80], write=False)
    assert len(rows) == 4
    assert summary["differences_decreasing"]


def test_check_recursion_verb(capsys):
    assert main(["check-recursion", "2", "1", "1", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "verdict = pass" in out and "threshold = 0.5" in out
    assert main(["check-lemma32", "1", "1,1", "0.5,0.5", "0.5"]) == 1
    assert "first_violation = 1" in capsys.readouterr().out


def test_exponents_verb(capsys):
    assert main(["exponents", "m=1", "p=2", "s=0.5", "d=2", "ell=1"]) == 0
    out = capsys.readouterr().out
    assert "q_s = 4.0" in out and "alpha_c = 2.0" in out
    assert main(["exponents", "m=1", "p=2", "s=0.5", "d=1", "ell=1"]) == 2
    assert main(["exponents", "m=1", "p=2"]) == 2


@pytest.mark.parametrize("name", ["linear_decay", "porous_absorption", "fast_diffusion"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / f"{name}.cfg")
    validate(cfg)
    assert cfg.base_dir == CONFIGS


@pytest.mark.slow
def test_reference_fast_diffusion_run(tmp_path, capsys):
    code = main(["run", str(CONFIGS / "fast_diffusion.cfg"), "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0, out
    line = next(ln for ln in out.splitlines() if "finite-time extinction" in ln)
    assert line.split()[0] == "pass"
    assert (tmp_path / "reports").is_dir()
