import json
import subprocess
import sys

import pytest
import yaml

from contactrrt import cli, fixtures
from contactrrt.geometry import save_stl


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def tube_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("tube")
    fx = fixtures.get_fixture("straight_tube")
    save_stl(d / "tube.stl", fx.mesh.vertices, fx.mesh.faces)
    (d / "goal.json").write_text(json.dumps({"distal": sorted(fx.goal.face_ids),
                                             "everything": list(range(fx.mesh.n_faces))}))
    return d


def test_plan_writes_artifacts_and_replays(tmp_path):
    out = tmp_path / "plan"
    assert run("plan", "--mesh", "fixture:y_bifurcation", "--seed", 3, "--out", out) == 0
    doc = json.loads((out / "plan.json").read_text())
    assert doc["result"]["status"] == "reached"
    assert "wall_time" not in doc["result"]
    n_nodes = len(doc["result"]["path"])
    assert len((out / "path.xyz").read_text().splitlines()) == n_nodes
    assert (out / "commands.csv").exists() and (out / "commands.json").exists()
    rep = tmp_path / "replay"
    assert run("replay", "--mesh", "fixture:y_bifurcation", "--commands", out / "commands.csv",
               "--plan", out / "plan.json", "--out", rep) == 0
    contacts = json.loads((rep / "contacts.json").read_text())
    assert len(contacts) == n_nodes


def test_trivial_goal_from_file(tmp_path, tube_files):
    out = tmp_path / "o"
    code = run("plan", "--mesh", tube_files / "tube.stl", "--goal", tube_files / "goal.json",
               "--target", "everything", "--start", "0,0,30", "--out", out)
    assert code == 0
    assert len((out / "path.xyz").read_text().splitlines()) == 1


def test_file_mesh_with_inlet_config(tmp_path, tube_files):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({
        "mesh": str(tube_files / "tube.stl"), "goal": str(tube_files / "goal.json"),
        "target": "distal", "inlet": {"center": [0, 0, 1], "radius": 2.0, "axis": [0, 0, 1],
                                      "tilt_deg": 10.0},
        "planner": {"max_iterations": 5000, "catheter_angle_deg": 60}}))
    assert run("plan", "--config", cfg, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert doc["target"] == "distal"
    assert doc["config"]["catheter_angle"] == pytest.approx(1.0471975511965976)


def test_no_inlet_for_file_mesh(tmp_path, tube_files):
    assert run("plan", "--mesh", tube_files / "tube.stl", "--goal", tube_files / "goal.json",
               "--out", tmp_path) == 1


def test_budget_exhausted_exit_code(tmp_path):
    code = run("plan", "--mesh", "fixture:aortic_arch", "--iterations", 3, "--out", tmp_path)
    assert code == 2
    assert not (tmp_path / "commands.csv").exists()


def test_missing_mesh_exit_code(tmp_path, capsys):
    assert run("plan", "--mesh", tmp_path / "none.stl", "--goal", tmp_path / "g.json",
               "--out", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("mesh: fixture:straight_tube\nbogus: 1\n")
    assert run("plan", "--config", cfg, "--out", tmp_path) == 1


def test_usage_error_is_exit_1():
    with pytest.raises(SystemExit) as exc:
        run("plan", "--no-such-flag")
    assert exc.value.code == 1


def test_bench_smoke_and_determinism(tmp_path):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text(yaml.safe_dump({"mesh": "fixture:straight_tube", "trials": 2,
                                   "planner": {"max_iterations": 2000, "step_size": 2.0},
                                   "grid": {"step": 100, "stop": 2000}}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("bench", "--config", cfg, "--out", a) == 0
    assert run("bench", "--config", cfg, "--out", b) == 0
    reports = json.loads((a / "reports.json").read_text())
    assert len(reports) == 2
    for name in ("reports.json", "curve.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len((a / "curve.csv").read_text().splitlines()) == 21
    assert not (a / "timing.csv").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text("mesh: fixture:straight_tube\ntrials: 5\nplanner:\n  max_iterations: 2000\n")
    assert run("bench", "--config", cfg, "--trials", 1, "--seed", 40, "--out", tmp_path) == 0
    reports = json.loads((tmp_path / "reports.json").read_text())
    assert [r["seed"] for r in reports] == [40]


def test_analyze_failure_grid(tmp_path):
    cfg = tmp_path / "f.yaml"
    inv = tmp_path / "inv.json"
    inv.write_text(json.dumps([{"name": "a", "theta_deg": 45, "length_mm": 5}]))
    cfg.write_text(yaml.safe_dump({"failure": {
        "radius_mm": [1, 2, 3, 4], "length_mm": [2, 5, 8, 11],
        "alpha_deg": [30, 50, 70, 90], "theta_deg": [15, 45, 90, 120],
        "inventory": str(inv)}}))
    assert run("analyze-failure", "--config", cfg, "--out", tmp_path) == 0
    assert len((tmp_path / "failure_grid.csv").read_text().splitlines()) == 257
    assert len(json.loads((tmp_path / "tool_selection.json").read_text())) == 16


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cfg = tmp_path / "f.yaml"
    cfg.write_text("failure:\n  radius_mm: [1]\n  length_mm: [2]\n  alpha_deg: [30]\n"
                   "  theta_deg: [45]\n")
    assert run("analyze-failure", "--config", cfg) == 0
    assert (tmp_path / "env" / "failure_grid.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "contactrrt.cli", "plan", "--mesh",
                           "fixture:straight_tube", "--iterations", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
