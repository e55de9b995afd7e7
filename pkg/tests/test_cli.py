import json
import subprocess
import sys

import pytest
import yaml

from ergodic_mfg.cli import main

SMALL = {
    "model": {"name": "lq_mfg",
              "params": {"kappa": -0.5, "drift_scheme": "central_monotone", "strictly_convex": True}},
    "grid": {"L": 4.0, "h": 0.1},
    "solver": {"damping": 0.5, "tol": 1e-10, "max_iters": 300, "init": [-1.0, 1.0], "n_probe": 10},
    "horizon": {"T": [2.0, 3.0], "dt": 0.05, "lambdas": [0.5], "t0": 0.5},
    "nplayer": {"N": [4, 8], "particles_N": 8, "T_sim": 5.0, "dt_sim": 0.01},
    "output": {"stride": 10, "plots": True},
}


def write_config(tmp_path, raw=None, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw if raw is not None else SMALL))
    return str(path)


def error_of(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_validate_builtin_ou(tmp_path, capsys):
    assert main(["validate", "ou", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and out["failed"] == []
    assert out["geometric_ergodicity"]["passed"]
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["passed"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == 0 and manifest["subcommand"] == "validate"
    assert {"versions", "timings", "seeds", "config"} <= set(manifest)


def test_negative_spacing_is_config_error(tmp_path, capsys):
    raw = {**SMALL, "grid": {"L": 4.0, "h": -0.1}}
    assert main(["validate", write_config(tmp_path, raw), "--out", str(tmp_path / "o")]) == 4
    assert error_of(capsys)["code"] == "CONFIG_INVALID"


def test_unknown_key_and_missing_file(tmp_path, capsys):
    raw = {**SMALL, "solver": {**SMALL["solver"], "theta": 0.5}}
    assert main(["validate", write_config(tmp_path, raw)]) == 4
    assert error_of(capsys)["code"] == "CONFIG_INVALID"
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 4
    assert error_of(capsys)["code"] == "IO_ERROR"


def test_validation_failure_exit_2(tmp_path, capsys):
    raw = {**SMALL, "model": {"name": "ou", "params": {"c1": 10.0}}}
    assert main(["validate", write_config(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2
    assert error_of(capsys)["code"] == "VALIDATION_FAILED"


def test_nonconvergence_exit_3(tmp_path, capsys):
    raw = {**SMALL, "solver": {**SMALL["solver"], "max_iters": 3}}
    assert main(["solve-mfg", write_config(tmp_path, raw), "--out", str(tmp_path / "o")]) == 3
    assert error_of(capsys)["code"] == "NOT_CONVERGED"
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == 3 and manifest["code"] == "NOT_CONVERGED"


def test_report_without_artifacts(tmp_path, capsys):
    assert main(["report", write_config(tmp_path), "--out", str(tmp_path / "empty")]) == 4
    assert error_of(capsys)["code"] == "NO_ARTIFACTS"


def test_solve_ergodic(tmp_path):
    assert main(["solve-ergodic", "ou", "--out", str(tmp_path), "--no-plots"]) == 0
    data = json.loads((tmp_path / "ergodic.json").read_text())
    assert {"rho", "residual", "iterations"} <= set(data)
    assert (tmp_path / "value.csv").exists() and (tmp_path / "mu.csv").exists()


ARTIFACTS = ["mfg_solution.json", "mu.csv", "value.csv", "policy.csv", "gap_history.csv",
             "validation.json"]


@pytest.fixture(scope="module")
def mfg_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("mfg")
    cfg = write_config(base)
    assert main(["solve-mfg", cfg, "--out", str(base / "a")]) == 0
    return base, cfg


def test_solve_mfg_schema(mfg_run):
    base, _ = mfg_run
    data = json.loads((base / "a" / "mfg_solution.json").read_text())
    assert {"rho", "residual", "iterations", "fixed_point_gap"} <= set(data)
    assert data["certificate"]["passed"]
    assert data["rho"] == pytest.approx(0.5, rel=0.02)
    assert data["init_agreement_w1"] <= 1e-8
    assert (base / "a" / "plots" / "mfg_density.svg").exists()
    assert not list((base / "a").glob("checkpoint_*"))
    assert list(data) == sorted(data)


def test_determinism(mfg_run):
    base, cfg = mfg_run
    assert main(["solve-mfg", cfg, "--out", str(base / "b")]) == 0
    for name in ARTIFACTS:
        assert (base / "a" / name).read_bytes() == (base / "b" / name).read_bytes(), name


def test_resume_reproduces(mfg_run, capsys):
    base, cfg = mfg_run
    out = str(base / "r")
    assert main(["solve-mfg", cfg, "--out", out, "--stop-after", "6"]) == 3
    assert error_of(capsys)["code"] == "STOPPED_EARLY"
    assert (base / "r" / "checkpoint_0.csv").exists()
    assert main(["solve-mfg", cfg, "--out", out, "--resume"]) == 0
    for name in ARTIFACTS:
        assert (base / "a" / name).read_bytes() == (base / "r" / name).read_bytes(), name


def test_horizon_turnpike_nplayer_report(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["horizon", cfg, "--out", str(out), "--T", "2"]) == 0
    meta = json.loads((out / "T_2" / "trajectory.json").read_text())
    assert meta["converged"] and meta["snapshot_steps"][-1] == 40
    assert (out / "T_2" / "gamma.csv").exists()
    assert main(["turnpike", cfg, "--out", str(out), "--no-plots"]) == 0
    tp = json.loads((out / "turnpike.json").read_text())
    assert [r["T"] for r in tp["rows"]] == [2.0, 3.0]
    assert (out / "turnpike.csv").read_text().startswith("T,gap_i@0.5")
    assert main(["nplayer", cfg, "--out", str(out)]) == 0
    conv = json.loads((out / "convergence.json").read_text())
    assert [r["N"] for r in conv["rows"]] == [4, 8]
    dev = json.loads((out / "deviation.json").read_text())
    assert all(p["passed"] for p in dev["profiles"])
    assert json.loads((out / "particles.json").read_text())["N"] == 8
    assert (out / "plots" / "nplayer_convergence.svg").exists()
    assert main(["report", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert {"turnpike", "convergence", "deviation", "particles"} <= set(report)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ergodic_mfg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("validate", "solve-ergodic", "solve-mfg", "horizon", "turnpike", "nplayer", "report"):
        assert name in res.stdout
