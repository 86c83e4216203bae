import importlib
import json
import os
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from identiquad import cli
from identiquad.runner import ScenarioError, ScenarioInfeasible, analyze, load, loads, simulate
from identiquad.runner.output import read_csv, write_outputs
from identiquad.runner.scenario import eval_number
from identiquad.runner.simulate import telemetry_columns
from identiquad.runner.trajectory import trajectory_figure_eight, trajectory_roll_sweep

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
sim_module = importlib.import_module("identiquad.runner.simulate")

SMALL = """name: small
assembly: {n: 3, alpha: 4*pi/9, beta: pi/9, layout: chain}
trajectory: {type: figure_eight, l: 0.2, period: 5.0}
failures:
  - {time: 0.2, module: 2, rotor: 3}
duration: 0.5
"""


# ---- trajectories ----------------------------------------------------------------

def test_figure_eight_examples():
    assert np.allclose(trajectory_figure_eight(0.2, 0.0).p, 0.0)
    assert np.allclose(trajectory_figure_eight(0.2, 0.25).p, [0.2, 0.0, -0.2 / 3], atol=1e-15)
    tp = trajectory_figure_eight(0.2, 0.3)
    assert tp.yaw == tp.pitch == tp.roll == 0.0


@pytest.mark.parametrize("period", [1.0, 5.0])
def test_figure_eight_derivatives_match_finite_differences(period):
    h = 1e-5
    for t in np.linspace(0.0, 1.0, 41):
        f = lambda s: trajectory_figure_eight(0.2, s, period=period)
        v_fd = (f(t + h).p - f(t - h).p) / (2 * h)
        a_fd = (f(t + h).v - f(t - h).v) / (2 * h)
        assert np.allclose(f(t).v, v_fd, atol=1e-6)
        assert np.allclose(f(t).a, a_fd, atol=1e-6)


def test_figure_eight_rejects_bad_arguments():
    with pytest.raises(ValueError):
        trajectory_figure_eight(0.0, 1.0)
    with pytest.raises(ValueError):
        trajectory_figure_eight(0.2, 1.0, period=0.0)


def test_roll_sweep_examples():
    assert trajectory_roll_sweep(0.0, 10.0).roll == 0.0
    assert np.isclose(trajectory_roll_sweep(5.0, 10.0).roll, np.pi)
    assert np.isclose(trajectory_roll_sweep(10.0, 10.0).roll, 2 * np.pi)
    assert np.isclose(trajectory_roll_sweep(12.0, 10.0).roll, 2 * np.pi)
    tp = trajectory_roll_sweep(2.5, 10.0, axis="pitch")
    assert np.isclose(tp.pitch, np.pi / 2) and tp.roll == 0.0


def test_roll_sweep_errors():
    with pytest.raises(ValueError):
        trajectory_roll_sweep(1.0, 0.0)
    with pytest.raises(ValueError):
        trajectory_roll_sweep(1.0, 10.0, axis="heave")


# ---- scenario parsing ------------------------------------------------------------

def test_eval_number():
    assert eval_number("4*pi/9") == 4 * np.pi / 9
    assert eval_number(3) == 3.0
    assert eval_number("-2**3") == -8.0
    for bad in ("__import__('os')", "pi()", True, [1], "1+"):
        with pytest.raises(ValueError):
            eval_number(bad)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_eval_number_round_trips_floats(x):
    assert eval_number(repr(x)) == x


@pytest.mark.parametrize("text, line, msg", [
    ("name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\nbogus: 1\n", 4, "unknown key"),
    ("name: x\nassembly:\n  n: 1\n  alpha: 0.1\ntrajectory: {type: hover}\n", 4, "alpha"),
    ("name: x\nassembly: {n: 2}\ntrajectory: {type: hover}\nfailures:\n  - {time: 1, module: 5, rotor: 1}\n",
     5, "module must be"),
    ("name: x\nassembly: {n: 1}\ntrajectory: {type: spiral}\n", 3, "trajectory.type"),
    ("name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\ndt: 0.003\n", 4, "divide"),
    ("name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\nbattery: [1.5]\n", 4, "battery"),
    ("name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\nduration: -1\n", 4, "positive"),
    ("name: x\nassembly: {n: 1\ntrajectory: {type: hover}\n", 3, "YAML"),
])
def test_scenario_errors_carry_line_numbers(text, line, msg):
    with pytest.raises(ScenarioError, match=msg) as info:
        loads(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_scenario_missing_file():
    with pytest.raises(ScenarioError, match="cannot read"):
        load("/nonexistent/scenario.yaml")


def test_scenario_explicit_edges_and_defaults():
    sc = loads("name: e\nassembly:\n  n: 2\n  alpha: pi/2\n  edges: [[1, 2, 2, 4, pi/9]]\n"
               "trajectory: {type: hover, origin: [0, 0, 1]}\n")
    assert sc.graph.edges[0].parent_connector == 2 and np.isclose(sc.graph.edges[0].beta, np.pi / 9)
    assert sc.battery == [1.0, 1.0] and sc.dt == 0.002 and sc.control_rate == 500.0
    assert sc.trajectory["origin"] == [0.0, 0.0, 1.0]


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")))
def test_shipped_scenarios_parse(path):
    sc = load(path)
    assert sc.name == path.stem


# ---- closed loop -------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_result():
    return simulate(loads(SMALL))


def test_row_count_and_columns(small_result):
    assert abs(len(small_result.rows) - 0.5 / 0.002) <= 1
    assert small_result.columns == telemetry_columns(3)
    cols = small_result.columns
    assert cols[:14] == ["t", "p_x", "p_y", "p_z", "pd_x", "pd_y", "pd_z", "roll", "pitch", "yaw",
                         "roll_d", "pitch_d", "yaw_d", "dof_mode"]
    assert cols[14:18] == ["u_11", "u_12", "u_13", "u_14"] and cols[25] == "u_34"
    assert cols[26:] == ["V_1", "V_2", "V_3"]


def test_health_view_lags_one_tick(small_result):
    t = small_result.column("t")
    active = small_result.extra["active"]
    change = t[np.flatnonzero(np.diff(active))[0] + 1]
    assert np.isclose(change, 0.202) and active[-1] == 11


def test_failed_rotor_command_zero_after_delay(small_result):
    t = small_result.column("t")
    u23 = small_result.column("u_23")
    assert np.all(u23[t >= 0.202 - 1e-9] == 0.0) and np.all(u23[t < 0.2] > 0.0)


def test_physics_holds_command_between_ticks(monkeypatch):
    seen = []
    real_step = sim_module.step

    def spy(model, state, u, dt, k_batt):
        seen.append(np.array(u))
        return real_step(model, state, u, dt, k_batt=k_batt)
    monkeypatch.setattr(sim_module, "step", spy)
    r = simulate(loads(SMALL.replace("duration: 0.5", "duration: 0.1\ncontrol_rate: 125")))
    assert len(seen) == 4 * (len(r.rows) - 1)
    for k in range(len(r.rows) - 1):
        block = seen[4 * k:4 * k + 4]
        assert all(np.array_equal(block[0], b) for b in block)
        assert np.array_equal(block[0], r.rows[k, 14:26])


def test_simulation_is_deterministic(tmp_path):
    sc = loads(SMALL)
    a = write_outputs(simulate(sc), sc, tmp_path / "a")
    b = write_outputs(simulate(sc), sc, tmp_path / "b")
    for fa, fb in zip(a, b):
        assert fa.read_bytes() == fb.read_bytes(), fa.name


def test_outputs_written(tmp_path, small_result):
    sc = loads(SMALL)
    files = write_outputs(small_result, sc, tmp_path)
    names = sorted(f.name for f in files)
    assert names == sorted(["telemetry.csv", "metrics.json", "position.svg", "angles.svg", "rotors.svg",
                            "voltages.svg", "dof_mode.svg"])
    for f in files:
        if f.suffix == ".svg":
            assert ET.parse(f).getroot().tag.endswith("svg")
    header, rows = read_csv(tmp_path / "telemetry.csv")
    assert header == small_result.columns and rows.shape == small_result.rows.shape
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["status"] == "ok" and m["dof_timeline"][0] == [0.0, 6]


def test_output_options_disable_plots(tmp_path, small_result):
    sc = loads(SMALL + "output: {plots: false, csv: false}\n")
    files = write_outputs(small_result, sc, tmp_path)
    assert [f.name for f in files] == ["metrics.json"]


def test_metrics_sane(small_result):
    m = small_result.metrics
    assert m["position_rmse"] >= 0 and m["ticks"] == len(small_result.rows)
    assert m["dof_timeline"][0][0] == 0.0
    assert all(0 < v <= 1 for v in m["final_voltages"])
    assert len(m["energy"]) == 3 and all(e > 0 for e in m["energy"])


def test_infeasible_assembly_needs_force():
    text = "name: x\nmodule: {u_max: 1000}\nassembly: {n: 1}\ntrajectory: {type: hover}\nduration: 0.02\n"
    with pytest.raises(ScenarioInfeasible):
        simulate(loads(text))
    assert simulate(loads(text), force=True).status in ("ok", "diverged")


def test_failures_below_four_dof_rejected():
    text = "name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\nfailures:\n  - {time: 1, module: 1, rotor: 1}\n"
    with pytest.raises(ValueError, match="four"):
        simulate(loads(text))


@pytest.mark.parametrize("text, dof", [
    ("name: a\nassembly: {n: 1}\ntrajectory: {type: hover}\n", 4),
    ("name: b\nassembly: {n: 3, alpha: 4*pi/9, beta: pi/9, layout: chain}\ntrajectory: {type: hover}\n", 6),
    ("name: c\nmodule: {frame_arm_length: 0.25}\nassembly: {n: 4, alpha: pi/4, beta: 0, layout: ring}\n"
     "trajectory: {type: hover}\n", 5),
])
def test_analyze_dof(text, dof):
    rep = analyze(loads(text))
    assert rep["dof"] == dof and rep["rank"] == dof
    assert rep["feasible"]
    json.dumps(rep)


# ---- CLI -------------------------------------------------------------------------

def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_cli_run_ok(tmp_path, capsys):
    sc = write(tmp_path, "s.yaml", SMALL)
    assert cli.main(["run", "--scenario", str(sc), "--out", str(tmp_path / "out")]) == cli.EXIT_OK
    assert (tmp_path / "out" / "telemetry.csv").exists()
    assert "small: ok" in capsys.readouterr().out


def test_cli_validation_failure(tmp_path, capsys):
    sc = write(tmp_path, "bad.yaml", "name: x\nassembly: {n: 1}\ntrajectory: {type: hover}\nbogus: 1\n")
    assert cli.main(["run", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == cli.EXIT_INVALID
    assert "line 4" in capsys.readouterr().err
    assert cli.main(["analyze", "--scenario", str(sc)]) == cli.EXIT_INVALID


def test_cli_infeasible_and_force(tmp_path):
    sc = write(tmp_path, "weak.yaml", "name: w\nmodule: {u_max: 1000}\nassembly: {n: 1}\n"
                                      "trajectory: {type: hover}\nduration: 0.02\n")
    assert cli.main(["run", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == cli.EXIT_INVALID
    assert cli.main(["run", "--scenario", str(sc), "--out", str(tmp_path / "o"), "--force"]) == cli.EXIT_OK


def test_cli_divergence(tmp_path):
    # reference far outside the divergence radius
    sc = write(tmp_path, "far.yaml", "name: far\nassembly: {n: 1}\n"
                                     "trajectory: {type: hover, origin: [0, 0, 150]}\nduration: 0.1\n")
    assert cli.main(["run", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == cli.EXIT_DIVERGED
    m = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert m["status"] == "diverged"


def test_cli_analyze_prints_json(capsys):
    assert cli.main(["analyze", "--scenario", str(SCENARIOS / "three_module_fig8.yaml")]) == cli.EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["dof"] == 6 and rep["modules"] == 3


def test_cli_batch(tmp_path):
    d = tmp_path / "sc"
    d.mkdir()
    write(d, "a.yaml", SMALL.replace("name: small", "name: a"))
    write(d, "b.yaml", "name: b\nassembly: {n: 1}\ntrajectory: {type: hover, origin: [0, 0, 150]}\n"
                       "duration: 0.1\n")
    code = cli.main(["batch", "--dir", str(d), "--out", str(tmp_path / "out"), "--jobs", "2"])
    assert code == cli.EXIT_DIVERGED
    assert (tmp_path / "out" / "a" / "telemetry.csv").exists()
    assert (tmp_path / "out" / "b" / "metrics.json").exists()


def test_cli_batch_empty_dir(tmp_path):
    assert cli.main(["batch", "--dir", str(tmp_path), "--out", str(tmp_path / "o")]) == cli.EXIT_INVALID


def test_log_level_from_environment(tmp_path):
    sc = write(tmp_path, "s.yaml", SMALL.replace("duration: 0.5", "duration: 0.3"))
    env = dict(os.environ, IDENTIQUAD_LOG="INFO")
    proc = subprocess.run([sys.executable, "-m", "identiquad.cli", "run", "--scenario", str(sc),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "removed rotor (2, 3)" in proc.stderr
    env["IDENTIQUAD_LOG"] = "ERROR"
    proc = subprocess.run([sys.executable, "-m", "identiquad.cli", "run", "--scenario", str(sc),
                           "--out", str(tmp_path / "o2")], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and "removed rotor" not in proc.stderr
