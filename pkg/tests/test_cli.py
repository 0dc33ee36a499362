import json
from importlib import resources
from pathlib import Path

import pytest

from sparse_poisson.cli import config_hash, main

DATA = resources.files("sparse_poisson").joinpath("data")


def _tiny():
    return [str(DATA / "tiny_A.csv"), str(DATA / "tiny_y.csv"), str(DATA / "tiny_lambda0.csv")]


def test_fit_smoke(tmp_path):
    A, y, lam = _tiny()
    out = tmp_path / "fit.json"
    assert main(["fit", "--A", A, "--y", y, "--lambda0", lam, "--budget", "2", "--threshold", "0.1", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["converged"]
    assert min(d["w_hat"]) >= 0 and sum(d["w_hat"]) <= 2 + 1e-9
    assert 0 in d["support"]
    assert d["manifest"]["seed"] == 0


def test_fit_lasso_and_penalized(tmp_path):
    A, y, lam = _tiny()
    assert main(["fit", "--A", A, "--y", y, "--lambda0", "2", "--eta", "0.1", "--estimator", "lasso",
                 "--out", str(tmp_path / "f.json")]) == 0


def test_fit_flag_conflicts(capsys):
    A, y, lam = _tiny()
    assert main(["fit", "--A", A, "--y", y, "--lambda0", lam, "--budget", "1", "--eta", "1"]) == 2
    assert main(["fit", "--A", A, "--y", y, "--lambda0", lam]) == 2
    assert main(["fit", "--A", A]) == 2


def test_fit_missing_file(tmp_path, capsys):
    missing = str(tmp_path / "absent.csv")
    _, y, lam = _tiny()
    assert main(["fit", "--A", missing, "--y", y, "--lambda0", lam, "--budget", "1"]) == 1
    assert "absent.csv" in capsys.readouterr().err


def test_fit_iteration_cap_exit_3(tmp_path):
    A, y, lam = _tiny()
    out = tmp_path / "f.json"
    code = main(["fit", "--A", A, "--y", y, "--lambda0", lam, "--budget", "2", "--max-iters", "1",
                 "--tol", "1e-15", "--out", str(out)])
    assert code == 3
    assert json.loads(out.read_text())["converged"] is False


def test_experiment_layout_and_determinism(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "c", "experiment": "concentration", "p": 10, "k": 2, "m": 50,
                               "n_grid": [20, 40], "num_probes": 2, "design": "uniform", "lambda0": 1.0}))
    for out in ("o1", "o2"):
        assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / out), "--workers", "1"]) == 0
    runs = [sorted((tmp_path / o / "concentration").iterdir()) for o in ("o1", "o2")]
    assert len(runs[0]) == 1 and runs[0][0].name == runs[1][0].name
    d = runs[0][0]
    assert {p.name for p in d.iterdir()} == {"records.csv", "summary.json", "manifest.json"}
    assert (d / "records.csv").read_bytes() == (runs[1][0] / "records.csv").read_bytes()
    man = json.loads((d / "manifest.json").read_text())
    assert man["config_hash"] == d.name
    summary = json.loads((d / "summary.json").read_text())
    assert config_hash(summary["config"]) == d.name


def test_experiment_bad_configs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "experiment": "unknown"}')
    assert main(["experiment", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "experiment" in capsys.readouterr().err
    bad.write_text('{"name": "x", "experiment": "roc", "m": "ten"}')
    assert main(["experiment", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "schema" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["experiment", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_conditions_identity(tmp_path):
    A = tmp_path / "A.csv"
    A.write_text("2,0,0,0\n0,2,0,0\n0,0,2,0\n0,0,0,2\n")
    out = tmp_path / "c.json"
    assert main(["conditions", "--A", str(A), "--k", "2", "--samples", "100", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["gamma_k"] == pytest.approx(1.0)
    assert main(["conditions", "--A", str(A), "--k", "2", "--s", "2", "--epsilon", "0.01", "--samples", "100",
                 "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["beta_sk"] > 0 and d["acceptance_ratio"] > 0


def test_conditions_errors(tmp_path):
    A = tmp_path / "A.csv"
    A.write_text("1,0\n0,1\n")
    assert main(["conditions", "--A", str(A), "--k", "1", "--samples", "0"]) == 2
    A.write_text("1,0\n0\n")
    assert main(["conditions", "--A", str(A), "--k", "1"]) == 1


def test_bounds_commands(capsys):
    assert main(["bounds", "--which", "cor2", "--s", "2.718281828459045", "--gamma", "1", "--n", "1"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["result"]["error_bound"] == pytest.approx(2.1170, abs=1e-4)
    assert main(["bounds", "--which", "thm1", "--s", "1", "--k", "1", "--beta", "1", "--lambda-min", "1",
                 "--epsilon", "1", "--e", "0.5"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["result"]["degenerate"] and d["result"]["flags"]
    assert main(["bounds", "--which", "bernstein", "--t", "10", "--n", "100", "--lam", "5"]) == 2
    assert "exceeds the admissible maximum" in capsys.readouterr().err
    assert main(["bounds", "--which", "thm1", "--s", "3"]) == 2
    assert main(["bounds", "--which", "bernstein", "--t", "1", "--n", "100", "--lam", "5"]) == 0
