import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from bohmqhd import cli, scenario
from bohmqhd.snapshot import read_series, write_series


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_list(capsys):
    assert run("list") == 0
    out = capsys.readouterr().out
    for name in ("stationary", "free_gaussian", "coherent", "two_sort_product", "symmetrized_pair",
                 "opposite_boost_pair"):
        assert name in out


@pytest.fixture(scope="module")
def stationary_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("stationary")
    code = run("run", "--scenario", "stationary", "--out", out, "--seed", 7)
    return code, out


def test_stationary_pipeline(stationary_run):
    code, out = stationary_run
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["passed"] is True
    for f in ("snapshots.bin", "fields/bohm.csv", "fields/mpqhd_A.csv", "fields/mpqhd_tot.csv",
              "trajectories.csv", "report.json", "report.txt"):
        assert (out / f).exists() and f in manifest["files"]
    report = json.loads((out / "report.json").read_text())
    eqs = {e["equation"] for e in report["entries"]}
    assert {"bm_continuity", "bm_eulerian", "mpqhd_continuity", "ehrenfest", "cauchy", "cauchy_equivalence",
            "force_identity", "quantum_potential_identity", "trajectory_chi_square_p"} <= eqs
    for e in report["entries"]:
        if e["equation"] not in ("trajectory_chi_square_p", "trajectory_ordering_violations"):
            assert e["norm"] < 1e-5, e
    assert len(read_series(out / "snapshots.bin")) == 5


def test_reports_are_byte_identical(stationary_run, tmp_path):
    _, first = stationary_run
    assert run("run", "--scenario", "stationary", "--out", tmp_path, "--seed", 7) == 0
    for f in ("report.json", "manifest.json", "trajectories.csv"):
        assert (tmp_path / f).read_bytes() == (first / f).read_bytes()


def test_bad_config_names_the_field(tmp_path, capsys):
    cfg = scenario.preset_config("stationary")
    del cfg["sorts"][0]["mass"]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert run("run", "--scenario", path, "--out", tmp_path / "o") == 1
    assert "sorts[0].mass" in capsys.readouterr().err


def test_unknown_scenario_is_an_operational_error(tmp_path, capsys):
    assert run("run", "--scenario", "no_such_thing", "--out", tmp_path) == 1
    assert "no_such_thing" in capsys.readouterr().err


def test_tolerance_file_can_fail_the_run(tmp_path, capsys):
    tol = tmp_path / "tol.yaml"
    tol.write_text("mpqhd_continuity: 1.0e-30\n")
    code = run("run", "--scenario", "coherent", "--stages", "verify", "--out", tmp_path / "o", "--tolerances", tol)
    assert code == 2
    assert "tolerance exceeded" in capsys.readouterr().err
    assert json.loads((tmp_path / "o" / "report.json").read_text())["passed"] is False


def test_malformed_tolerance_file(tmp_path):
    tol = tmp_path / "tol.yaml"
    tol.write_text("cauchy: lots\n")
    assert run("run", "--scenario", "coherent", "--stages", "verify", "--out", tmp_path, "--tolerances", tol) == 1


def test_boundary_leak_exit_code(tmp_path, capsys):
    code = run("run", "--scenario", "free_gaussian", "--stages", "propagate", "--out", tmp_path,
               "--grid-override", "lo=-6,hi=6,n=64")
    assert code == 1
    assert "boundary leak" in capsys.readouterr().err


def test_overrides_are_applied_and_recorded(tmp_path):
    code = run("run", "--scenario", "free_gaussian", "--stages", "propagate,verify", "--out", tmp_path,
               "--grid-override", "n=128", "--dt-override", "2e-3")
    assert code == 0
    series = read_series(tmp_path / "snapshots.bin")
    assert series.grid.position_axes[0].n == 128
    assert series.dt == pytest.approx(2e-3)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["overrides"] == {"grid": {"n": 128}, "dt": 2e-3}


def test_bad_arguments_exit_via_argparse(tmp_path):
    with pytest.raises(SystemExit):
        run("run", "--scenario", "coherent", "--stages", "dance")
    with pytest.raises(SystemExit):
        run("run", "--scenario", "coherent", "--grid-override", "m=3")


def test_convergence_stage(tmp_path):
    assert run("run", "--scenario", "free_gaussian", "--stages", "convergence", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    (row,) = report["convergence"]
    assert abs(row["order"] - 2.0) < 0.3
    assert "convergence free_gaussian bm_continuity" in (tmp_path / "report.txt").read_text()


def test_import_round_trip(tmp_path):
    s = scenario.preset("two_sort_product")
    path = write_series(tmp_path / "two.bin", s.series())
    out = tmp_path / "o"
    assert run("import", path, "--scenario", "two_sort_product", "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]
    assert any(e["equation"] == "quantum_potential_identity_float64" for e in report["entries"])
    assert (out / "fields" / "mpqhd_B.csv").exists()


def test_import_rejects_a_damaged_file(tmp_path, capsys):
    s = scenario.preset("stationary")
    path = write_series(tmp_path / "s.bin", s.series())
    path.write_bytes(path.read_bytes()[:-3])
    assert run("import", path, "--out", tmp_path / "o") == 1
    assert "length mismatch" in capsys.readouterr().err


def test_thread_variable(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.THREADS_ENV, "two")
    assert run("list") == 1
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert run("list") == 0


@pytest.mark.skipif(shutil.which("bohmqhd") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["bohmqhd", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "coherent_2d" in proc.stdout


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bohmqhd.cli", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "stationary" in proc.stdout
