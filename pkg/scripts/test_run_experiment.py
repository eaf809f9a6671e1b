#!/usr/bin/env python3
"""
End-to-end tests for the experiment runner: exit codes, artifacts and manifests
"""

import json
import math
import os

import pandas as pd
import pytest

from scripts.potential import Polynomial
from scripts.run_experiment import EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_NUMERICAL, EXIT_OK, main
from scripts.utils import file_sha256

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
X4X8 = ["1  4 0", "1  0 8"]
MODEL = ["0.5  0 2", "1.0  2 1", "1.0  4 0"]


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def run(command, config, out_dir, *extra):
    return main([command, "--config", config, "--out", str(out_dir), "--quiet", *extra])


def load(out_dir, name):
    with open(os.path.join(str(out_dir), name), encoding="utf-8") as f:
        return json.load(f)


def test_unknown_key_writes_nothing(tmp_path):
    config = write_config(tmp_path, {"kind": "flow", "system": {"f": X4X8, "colour": 1},
                                     "initial": {"z0": [0.3, 0.0]}, "integrator": {"t_end": 10.0}})
    out_dir = tmp_path / "out"
    assert run("flow", config, out_dir) == EXIT_CONFIG
    assert not out_dir.exists()


def test_config_errors(tmp_path):
    out_dir = tmp_path / "out"
    flow = {"kind": "flow", "system": {"f": X4X8}, "initial": {"z0": [0.3, 0.0]},
            "integrator": {"t_end": 10.0}}
    config = write_config(tmp_path, flow)
    # subcommand disagrees with the config
    assert run("sweep", config, out_dir) == EXIT_CONFIG
    # missing horizon
    config = write_config(tmp_path, {**flow, "integrator": {}}, "no_horizon.json")
    assert run("flow", config, out_dir) == EXIT_CONFIG
    # wrong initial condition length
    config = write_config(tmp_path, {**flow, "initial": {"z0": [0.3]}}, "short.json")
    assert run("flow", config, out_dir) == EXIT_CONFIG
    # invalid JSON
    broken = tmp_path / "broken.json"
    broken.write_text("{\"kind\": ", encoding="utf-8")
    assert run("flow", str(broken), out_dir) == EXIT_CONFIG
    assert run("flow", str(tmp_path / "missing.json"), out_dir) == EXIT_CONFIG
    assert not out_dir.exists()


def test_perturbation_epsilon_out_of_range(tmp_path):
    config = write_config(tmp_path, {"kind": "flow", "system": {"f": X4X8},
                                     "initial": {"z0": [0.3, 0.0]}, "integrator": {"t_end": 10.0},
                                     "perturbation": {"amplitude": 0.5, "epsilon": 0.7}})
    out_dir = tmp_path / "out"
    assert run("flow", config, out_dir) == EXIT_CONFIG
    assert not out_dir.exists()


def test_reduce_bundled_config(tmp_path):
    out_dir = tmp_path / "reduce"
    assert run("reduce", os.path.join(CONFIG_DIR, "reduce_2d.json"), out_dir) == EXIT_OK
    data = load(out_dir, "reduced.json")
    reduced = data["reduced"]
    assert reduced["p"] == 4
    f = Polynomial.from_text(reduced["f_text"])
    assert f.coefficient((4,)) == pytest.approx(0.5, abs=1e-10)
    for exps, coeff in f.terms.items():
        if exps != (4,):
            assert abs(coeff) <= 1e-10
    assert reduced["implicit_residual_sup"] <= 1e-12
    assert data["critical"]["adams_simon"]["kind"] == "Positivity"


def test_reduce_without_kernel_is_numerical_failure(tmp_path):
    config = write_config(tmp_path, {"kind": "reduce", "system": {"model": ["0.5  2 0", "0.5  0 2"]}})
    out_dir = tmp_path / "out"
    assert run("reduce", config, out_dir) == EXIT_NUMERICAL
    error = load(out_dir, "error.json")
    assert error["error"] == "InputError"
    assert "manifest.json" in os.listdir(str(out_dir))


def test_flow_case_one_bundled_config(tmp_path):
    out_dir = tmp_path / "case1"
    assert run("flow", os.path.join(CONFIG_DIR, "x4x8_case1.json"), out_dir) == EXIT_OK
    report = load(out_dir, "report.json")["report"]
    assert report["verdict"] == "AlgebraicCase1"
    assert report["beta"] == pytest.approx(8 ** -0.5, rel=0.02)
    assert report["alpha0"] == pytest.approx(1.0, rel=0.02)

    frame = pd.read_csv(os.path.join(str(out_dir), "trajectory.csv"))
    assert {"t", "z_1", "z_2", "r", "t_pow_r"} <= set(frame.columns)


def test_manifest_and_reproducibility(tmp_path):
    config = write_config(tmp_path, {"kind": "flow", "system": {"f": X4X8},
                                     "initial": {"z0": [0.3, 0.0]}, "integrator": {"t_end": 1e4}})
    first, second = tmp_path / "first", tmp_path / "second"
    assert run("flow", config, first) == EXIT_OK
    assert run("flow", config, second) == EXIT_OK

    manifest = load(first, "manifest.json")
    listed = {entry["path"]: entry["sha256"] for entry in manifest["artifacts"]}
    assert set(listed) == {"report.json", "trajectory.csv"}
    for name, digest in listed.items():
        assert digest == file_sha256(os.path.join(str(first), name))
    assert manifest["command"] == "flow"
    assert manifest["seed"] == 0

    for name in ("report.json", "trajectory.csv"):
        with open(os.path.join(str(first), name), "rb") as a, \
                open(os.path.join(str(second), name), "rb") as b:
            assert a.read() == b.read()
    assert load(second, "manifest.json")["config_hash"] == manifest["config_hash"]


def test_overrides_are_recorded(tmp_path):
    config = write_config(tmp_path, {"kind": "flow", "system": {"f": X4X8},
                                     "initial": {"z0": [0.3, 0.0]}, "integrator": {"t_end": 1e6}})
    out_dir = tmp_path / "short"
    # two decades are not enough for a verdict
    assert run("flow", config, out_dir, "--seed", "5", "--t-end", "100") == EXIT_INCONCLUSIVE
    manifest = load(out_dir, "manifest.json")
    assert manifest["seed"] == 5
    assert manifest["overrides"]["t_end"] == 100.0
    report = load(out_dir, "report.json")
    assert report["report"]["verdict"] == "Inconclusive"
    assert "extend t_end" in report["report"]["reason"]
    assert report["trajectory"]["t_final"] == pytest.approx(100.0)


def test_classify_recorded_trajectory(tmp_path):
    flow = write_config(tmp_path, {"kind": "flow", "system": {"f": X4X8},
                                   "initial": {"z0": [0.3, 0.0]}, "integrator": {"t_end": 1e6}},
                        "flow.json")
    flow_dir = tmp_path / "flow"
    assert run("flow", flow, flow_dir) == EXIT_OK
    config = write_config(tmp_path, {"kind": "classify", "system": {"f": X4X8},
                                     "trajectory": "flow/trajectory.csv"}, "classify.json")
    out_dir = tmp_path / "classified"
    assert run("classify", config, out_dir) == EXIT_OK
    report = load(out_dir, "report.json")["report"]
    assert report["verdict"] == "AlgebraicCase1"
    assert report["beta"] == pytest.approx(load(flow_dir, "report.json")["report"]["beta"], rel=1e-6)


def test_classify_missing_trajectory(tmp_path):
    config = write_config(tmp_path, {"kind": "classify", "system": {"f": X4X8},
                                     "trajectory": "nowhere.csv"})
    assert run("classify", config, tmp_path / "out") == EXIT_CONFIG


def test_critical_report(tmp_path):
    out_dir = tmp_path / "critical"
    assert run("critical", os.path.join(CONFIG_DIR, "x4x8_critical.json"), out_dir) == EXIT_OK
    data = load(out_dir, "critical.json")
    assert data["p"] == 4
    assert data["adams_simon"]["kind"] == "Positivity"
    assert data["slow_decay_admissible"] is True
    best = max(data["points"], key=lambda pt: pt["value"])
    assert best["value"] == pytest.approx(1.0)
    assert best["predicted_beta"] == pytest.approx(8 ** -0.5)
    frame = pd.read_csv(os.path.join(str(out_dir), "critical_points.csv"))
    assert len(frame) == len(data["points"])


def test_empty_sweep(tmp_path):
    config = write_config(tmp_path, {"kind": "sweep", "system": {"f": X4X8},
                                     "integrator": {"t_end": 1e6}, "sweep": {"count": 0}})
    out_dir = tmp_path / "sweep"
    assert run("sweep", config, out_dir) == EXIT_OK
    data = load(out_dir, "sweep.json")
    assert data["size"] == 0
    assert data["rows"] == [] and data["verdicts"] == {}


def test_sweep_too_large(tmp_path):
    config = write_config(tmp_path, {"kind": "sweep", "system": {"f": X4X8},
                                     "integrator": {"t_end": 1e6}, "sweep": {"count": 10 ** 6}})
    assert run("sweep", config, tmp_path / "out") == EXIT_CONFIG


def test_small_sweep(tmp_path):
    config = write_config(tmp_path, {
        "kind": "sweep",
        "system": {"f": X4X8},
        "integrator": {"t_end": 1e6},
        "sweep": {"initial_conditions": [[0.2, 0.3], [0.3, 0.0], [-0.3, 0.0]], "parallelism": 2},
    })
    out_dir = tmp_path / "sweep"
    assert run("sweep", config, out_dir) == EXIT_OK
    data = load(out_dir, "sweep.json")
    assert [row["index"] for row in data["rows"]] == [0, 1, 2]
    assert [row["verdict"] for row in data["rows"]] == [
        "AlgebraicCase2", "AlgebraicCase1", "AlgebraicCase1"]
    assert data["verdicts"] == {"AlgebraicCase1": 2, "AlgebraicCase2": 1}
    assert sum(b["count"] for b in data["basins"].values()) == 2
    assert len(data["basins"]) == 2

    manifest = load(out_dir, "manifest.json")
    paths = {entry["path"] for entry in manifest["artifacts"]}
    assert {"sweep.json", "sweep.csv", os.path.join("tasks", "task_0000.json")} <= paths

    # sequential and parallel runs agree
    sequential = write_config(tmp_path, {
        "kind": "sweep",
        "system": {"f": X4X8},
        "integrator": {"t_end": 1e6},
        "sweep": {"initial_conditions": [[0.2, 0.3], [0.3, 0.0], [-0.3, 0.0]], "parallelism": 1},
    }, "sequential.json")
    assert run("sweep", sequential, tmp_path / "seq") == EXIT_OK
    assert load(tmp_path / "seq", "sweep.json")["rows"] == data["rows"]


def test_sweep_circle_axis_runs(tmp_path):
    config = write_config(tmp_path, {"kind": "sweep", "system": {"f": X4X8},
                                     "integrator": {"t_end": 1e6},
                                     "sweep": {"count": 4, "radius": 0.3}})
    out_dir = tmp_path / "circle"
    assert run("sweep", config, out_dir) == EXIT_OK
    rows = load(out_dir, "sweep.json")["rows"]
    # angles 0, pi/2, pi, 3 pi/2: the two axis runs along x_1 are Case 1
    assert rows[0]["z0_1"] == pytest.approx(0.3)
    assert [row["verdict"] for row in rows] == [
        "AlgebraicCase1", "AlgebraicCase2", "AlgebraicCase1", "AlgebraicCase2"]


def test_verify_spectral_bundled_config(tmp_path):
    out_dir = tmp_path / "spectral"
    assert run("verify-spectral", os.path.join(CONFIG_DIR, "spectral_all_families.json"),
               out_dir) == EXIT_OK
    data = load(out_dir, "spectral.json")
    assert data["report"]["passed"] is True
    assert data["report"]["max_violation"] <= 1e-12
    assert len(data["basis"]) == 8
    assert data["norm_constants"]["c1"] <= data["norm_constants"]["c2"]


def test_parabolic_neutral_dynamics(tmp_path):
    out_dir = tmp_path / "parabolic"
    assert run("parabolic", os.path.join(CONFIG_DIR, "parabolic_model.json"), out_dir) == EXIT_OK
    data = load(out_dir, "report.json")
    assert data["report"]["verdict"] == "AlgebraicCase1"
    assert data["report"]["beta"] == pytest.approx(0.5, rel=0.02)
    assert data["residual"]["non_increasing"] is True
    assert data["adams_simon"]["kind"] == "Positivity"


def test_elliptic_neutral_dynamics(tmp_path):
    out_dir = tmp_path / "elliptic"
    assert run("elliptic", os.path.join(CONFIG_DIR, "elliptic_m3.json"), out_dir) == EXIT_OK
    data = load(out_dir, "report.json")
    assert data["trajectory"]["termination"] == "horizon"
    assert data["report"]["verdict"] == "AlgebraicCase1"
    assert data["report"]["beta"] == pytest.approx(math.sqrt(3) / 2, rel=0.03)
    assert data["reduced"]["p"] == 4


def test_parabolic_with_nonlinearity(tmp_path):
    out_dir = tmp_path / "nonlinear"
    config = os.path.join(CONFIG_DIR, "parabolic_nonlinear.json")
    assert run("parabolic", config, out_dir) == EXIT_OK
    data = load(out_dir, "report.json")
    assert data["nonlinearity"]["prefactors"] == ["0.5  1 0", "0.5  1 0"]
    assert data["nonlinearity"]["velocity_prefactors"] == []
    # N2 = b(u) M(u) only rescales time near the origin
    assert data["report"]["verdict"] == "AlgebraicCase1"
    assert data["report"]["beta"] == pytest.approx(0.5, rel=0.03)

    plain_dir = tmp_path / "plain"
    assert run("parabolic", os.path.join(CONFIG_DIR, "parabolic_model.json"), plain_dir) == EXIT_OK
    forced = pd.read_csv(out_dir / "trajectory.csv")
    plain = pd.read_csv(plain_dir / "trajectory.csv")
    assert abs(forced["u_1"].iloc[-1]) < abs(plain["u_1"].iloc[-1])


def test_nonlinearity_config_errors(tmp_path):
    base = {"kind": "parabolic", "system": {"model": MODEL}, "initial": {"u0": [0.2, -0.04]},
            "integrator": {"t_end": 10.0}}
    out_dir = tmp_path / "out"
    bad = [
        {"velocity_prefactors": ["1  1 0", "1  1 0"]},
        {"prefactors": ["1  1 0"]},
        {"prefactors": ["1  0 0", "1  1 0"]},
        {"prefactors": ["1  1 x", "1  1 0"]},
        {"prefactors": "1  1 0"},
        {"prefactors": ["1  1 0", "1  1 0"], "scale": 2},
    ]
    for i, section in enumerate(bad):
        config = write_config(tmp_path, {**base, "nonlinearity": section}, f"bad_{i}.json")
        assert run("parabolic", config, out_dir) == EXIT_CONFIG
    assert not out_dir.exists()


def test_elliptic_with_nonlinearity(tmp_path):
    base = {"kind": "elliptic", "system": {"lambdas": [-3.0]},
            "initial": {"u0": [0.2], "v0": [-0.3]}, "integrator": {"t_end": 5.0},
            "elliptic": {"m": 2.0, "projection": "stable"}}
    forced_cfg = write_config(tmp_path, {**base, "nonlinearity": {"prefactors": ["2  1"],
                                                                  "velocity_prefactors": ["5  1"]}},
                              "forced.json")
    plain_cfg = write_config(tmp_path, base, "plain.json")
    outcomes = (EXIT_OK, EXIT_INCONCLUSIVE)
    assert run("elliptic", forced_cfg, tmp_path / "forced") in outcomes
    assert run("elliptic", plain_cfg, tmp_path / "plain") in outcomes
    data = load(tmp_path / "forced", "report.json")
    assert data["trajectory"]["termination"] != "escaped"
    assert data["nonlinearity"]["velocity_prefactors"] == ["5.0  1"]
    assert "nonlinearity" not in load(tmp_path / "plain", "report.json")
    forced = pd.read_csv(tmp_path / "forced" / "trajectory.csv")
    plain = pd.read_csv(tmp_path / "plain" / "trajectory.csv")
    assert forced["q_1"].iloc[-1] != pytest.approx(plain["q_1"].iloc[-1], rel=1e-3)


def test_non_finite_initial_condition(tmp_path):
    path = tmp_path / "nan.json"
    path.write_text('{"kind": "flow", "system": {"f": "1  4 0\\n1  0 8"}, '
                    '"initial": {"z0": [NaN, 0.0]}, "integrator": {"t_end": 10.0}}',
                    encoding="utf-8")
    out_dir = tmp_path / "out"
    assert run("flow", str(path), out_dir) == EXIT_CONFIG
    assert not out_dir.exists()


def test_sweep_failed_member_is_recorded(tmp_path):
    config = write_config(tmp_path, {"kind": "sweep", "system": {"f": X4X8},
                                     "integrator": {"t_end": 1e6},
                                     "sweep": {"initial_conditions": [[0.3, 0.0], [1e200, 0.0]]}})
    out_dir = tmp_path / "sweep"
    assert run("sweep", config, out_dir) == EXIT_NUMERICAL
    data = load(out_dir, "sweep.json")
    healthy, failed = data["rows"]
    assert healthy["verdict"] == "AlgebraicCase1"
    assert failed["verdict"] == "Failed"
    assert failed["error"].startswith("InputError")
    assert data["verdicts"] == {"AlgebraicCase1": 1, "Failed": 1}

    manifest = load(out_dir, "manifest.json")
    paths = {entry["path"] for entry in manifest["artifacts"]}
    assert os.path.join("tasks", "task_0001.json") in paths
    task = load(out_dir, os.path.join("tasks", "task_0001.json"))
    assert task["row"]["verdict"] == "Failed" and task["report"] is None
