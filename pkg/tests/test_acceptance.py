"""Acceptance suite: each test checks one criterion at its stated tolerance and runtime."""

import json
import math
import time

import numpy as np
import pytest

from oracles import grid_min, projection_by_enumeration, q_rows
from sparse_poisson.cli import config_hash, main
from sparse_poisson.conditions import (
    estimate_gamma_k,
    feasible_perturbation_directions,
    perturbation_values,
    verify_theorem2_chain,
)
from sparse_poisson.experiments import bernstein_exceedance, list_presets, load_config
from sparse_poisson.likelihood import q_value_grad, rescaled_lasso_value_grad
from sparse_poisson.model import build_model, random_sparse_truth, uniform_design
from sparse_poisson.solver import FeasibilityBudget, SolverOptions, project_theta_s, solve_ml
from sparse_poisson.stats import mann_kendall

_RUNS: dict = {}


def run_preset(name, root, tag="a"):
    """Run a bundled preset through the CLI; returns (output dir, summary, seconds)."""
    key = (name, tag)
    if key not in _RUNS:
        out = root / tag
        t0 = time.perf_counter()
        assert main(["experiment", "--config", name, "--out", str(out), "--workers", "1"]) == 0
        dt = time.perf_counter() - t0
        cfg = load_config(name)
        d = out / cfg.experiment / config_hash(cfg.to_dict())
        _RUNS[key] = (d, json.loads((d / "summary.json").read_text())["summary"], dt)
    return _RUNS[key]


@pytest.fixture(scope="module")
def preset_root(tmp_path_factory):
    return tmp_path_factory.mktemp("presets")


def test_01_solver_matches_grid_search(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        p = 1 + i % 3
        s = float(rng.uniform(0.2, 0.35)) if p == 3 else float(rng.uniform(0.3, 1.0))
        # budgets on the lattice so that the grid contains the face sum(w) = s
        s = round(s, 3)
        A = rng.uniform(size=(50, p))
        lam0 = rng.uniform(0.5, 2.0, size=50)
        w_star = rng.dirichlet(np.ones(p)) * s * rng.uniform(0.3, 1.5)
        y = rng.poisson(lam0 + A @ w_star).astype(float)
        res = solve_ml(build_model(A, lam0), y, FeasibilityBudget.constrained(s), SolverOptions(tol=1e-10))
        best, _ = grid_min(q_rows(A, lam0, y), p, s, h=1e-3)
        worst = max(worst, abs(res.objective - best))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 60
    criterion(1, "ML solver vs exhaustive grid (20 instances, p<=3, n=50)", ok,
              f"max |gap|={worst:.2e}, {dt:.1f}s")
    assert ok


def _fd(f, w, h=1e-6):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h * (1 + abs(w[j]))
        g[j] = (f(w + e) - f(w - e)) / (2 * e[j])
    return g


def test_02_gradients_match_finite_differences(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(2000 + i)
        n, p = 30, 6
        model = build_model(rng.uniform(size=(n, p)), rng.uniform(0.5, 3.0, size=n))
        y = rng.poisson(3.0, size=n)
        w = rng.uniform(0.05, 1.0, size=p)
        for fn in (q_value_grad, rescaled_lasso_value_grad):
            g = fn(model, y, w).gradient
            fd = _fd(lambda v: fn(model, y, v, gradient=False).value, w)
            worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5
    criterion(2, "gradients vs central differences (20 points, both losses)", ok, f"max rel err={worst:.2e}, {dt:.1f}s")
    assert ok


def test_03_projection_oracle_and_idempotence(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    idem = True
    for _ in range(1000):
        p = int(rng.integers(1, 7))
        v = rng.normal(0, 2, size=p)
        s = float(rng.uniform(0.01, 5))
        w = project_theta_s(v, s)
        worst = max(worst, float(np.max(np.abs(w - projection_by_enumeration(v, s)))))
        idem &= bool(np.array_equal(project_theta_s(w, s), w))
    ok = worst < 1e-6 and idem
    criterion(3, "projection vs brute-force oracle (1000 cases), idempotent", ok, f"max err={worst:.1e}, idempotent={idem}")
    assert ok


def test_04_perturbation_positivity(criterion):
    t0 = time.perf_counter()
    lowest = np.inf
    count = 0
    for i in range(5):
        rng = np.random.default_rng(4000 + i)
        p = 30
        model = build_model(uniform_design(25, p, rng), rng.uniform(0.5, 5.0, size=25))
        truth = random_sparse_truth(p, 4, float(rng.uniform(1, 5)), rng)
        for eps in (1e-3, 0.1):
            for U, _ in feasible_perturbation_directions(truth, eps, 10_000, seed=i):
                if U.shape[0]:
                    f = perturbation_values(model, truth, U, eps)
                    lowest = min(lowest, float(f.min()))
                    count += f.size
    dt = time.perf_counter() - t0
    ok = lowest >= -1e-12 and count >= 100_000 and dt < 60
    criterion(4, "f(eps u) >= -1e-12 on sampled feasible perturbations", ok, f"{count} samples, min={lowest:.2e}, {dt:.1f}s")
    assert ok


def test_05_theorem2_chain(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    model = build_model(uniform_design(200, 10, rng), 1.0)
    truth = random_sparse_truth(10, 3, 2.0, rng)
    gamma = estimate_gamma_k(model.A, truth.k, 10_000, seed=5)
    rep = verify_theorem2_chain(model, truth, 0.1, 10_000, seed=5, gamma_hat=gamma)
    dt = time.perf_counter() - t0
    ok = rep.bound_passes == rep.bound_checks >= 10_000 and rep.cone_passes == rep.cone_checks and dt < 60
    criterion(5, "chain bound gamma eps^2/(9 lambda_max) on all samples", ok,
              f"{rep.bound_passes}/{rep.bound_checks} pass, min margin={rep.min_margin:.2e}, {dt:.1f}s")
    assert ok


def test_06_beta_decreasing_in_s(criterion, preset_root):
    _, summary, dt = run_preset("beta-small", preset_root)
    rho = summary["spearman_rho"]
    ok = summary["strictly_decreasing"] and abs(rho + 1.0) < 1e-12 and dt < 300
    criterion(6, "beta_hat strictly decreasing over s=1..10 (Spearman -1)", ok, f"rho={rho:.12f}, {dt:.1f}s")
    assert ok


def test_07_transition_vs_n(criterion, preset_root):
    _, summary, dt = run_preset("tr-small", preset_root)
    n_at = summary["n_at_0.9"]
    n_ml, n_ls = n_at["ml"], n_at["rescaled_lasso"]
    ok = n_ml is not None and (n_ls is None or n_ml <= n_ls) and dt < 900
    ml_curve = [pt["success"] for pt in summary["curves"]["ml"]]
    trend = mann_kendall(ml_curve, "increasing")
    ok = ok and trend.p_value < 0.05
    ratio = summary["n_ratio_lasso_over_ml"]
    criterion(7, "first n with success >= 0.9: ML <= rescaled LASSO", ok,
              f"ML n={n_ml}, LASSO n={n_ls}, ratio={ratio}, MK p={trend.p_value:.1e}, {dt:.0f}s")
    assert ok


def test_08_roc(criterion, preset_root):
    _, summary, dt = run_preset("roc-small", preset_root)
    rows = summary["comparison"]
    worst = min(r["PD_ml"] - r["PD_lasso"] + r["pooled_stderr"] for r in rows)
    ok = all(r["ml_not_worse"] for r in rows) and dt < 900
    criterion(8, "ROC: ML PD >= LASSO PD - pooled SE at every PF grid point", ok,
              f"{len(rows)} points, min slack={worst:.3f}, {dt:.0f}s")
    assert ok


def test_09_tightness(criterion, preset_root):
    _, summary, dt = run_preset("tightness-small", preset_root)
    r2 = summary["regression"]["r_squared"]
    pvals = {s: t["p_value"] for s, t in summary["trend_in_n"].items()}
    ok = r2 >= 0.8 and all(p < 0.05 for p in pvals.values()) and dt < 1200
    criterion(9, "error vs bound R^2 >= 0.8 and decreasing in n per s", ok,
              f"R^2={r2:.3f}, MK p max={max(pvals.values()):.1e}, {dt:.0f}s")
    assert ok


def test_10_concentration(criterion, preset_root):
    _, summary, dt = run_preset("concentration-small", preset_root)
    probs = [pt["probability"] for pt in summary["points"]]
    ok = summary["non_increasing_within_noise"] and dt < 300
    criterion(10, "exceedance probability non-increasing over n=50..400", ok, f"P={probs}, {dt:.1f}s")
    assert ok


def test_11_model_comparison(criterion, preset_root):
    _, small, dt1 = run_preset("bayes-small", preset_root)
    _, large, dt2 = run_preset("bayes-largecount", preset_root)
    k = str(load_config("bayes-small").k)
    bf = small["log_bayes_factor"][k]["mean"]
    wins = small["heldout_ml_wins_fraction"]
    per_obs = max(v["mean_abs_per_obs"] for v in large["log_bayes_factor"].values())
    ok = bf > 0 and wins >= 0.6 and per_obs < 0.05 and dt1 + dt2 < 600
    criterion(11, "log BF > 0, held-out ML wins >= 60%, |log BF|/n < 0.05 at lambda0=1e5", ok,
              f"mean log BF_k={bf:.3f}, wins={wins:.2f}, max |log BF|/n={per_obs:.4f}, {dt1 + dt2:.1f}s")
    assert ok


def test_12_bernstein(criterion):
    t0 = time.perf_counter()
    rows = [bernstein_exceedance(np.full(100, 5.0), t, 10_000, seed=12) for t in (0.5, 1.0, 1.5)]
    dt = time.perf_counter() - t0
    ok = all(r["frequency"] <= 2 * math.exp(-r["t"] ** 2) + 0.02 for r in rows) and dt < 120
    detail = ", ".join(f"t={r['t']}: {r['frequency']:.4f} <= {2 * math.exp(-r['t'] ** 2) + 0.02:.4f}" for r in rows)
    criterion(12, "Bernstein exceedance frequency within 2exp(-t^2)+0.02", ok, detail)
    assert ok


SMALL = [n for n in list_presets() if not n.endswith("-paper")]


def test_13_determinism(criterion, preset_root):
    same = {}
    for name in SMALL:
        d1, _, _ = run_preset(name, preset_root, "a")
        d2, _, _ = run_preset(name, preset_root, "b")
        same[name] = (d1 / "records.csv").read_bytes() == (d2 / "records.csv").read_bytes()
    ok = all(same.values())
    criterion(13, "identical records.csv on rerun of every desk-scale preset", ok,
              f"{sum(same.values())}/{len(same)} identical")
    assert ok
