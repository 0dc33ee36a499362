"""Seeded Monte Carlo experiments.

Every random quantity is drawn from a generator seeded with
``(config.seed, stream, *indices)`` where ``stream`` names the purpose
(design matrix, ground truth, noise, solver restarts, train/test split).
Trials therefore never share generator state and can run in any order or
in parallel; records are sorted by trial index before aggregation.
"""

from __future__ import annotations

import csv
import json
import math
import time
from importlib import resources
from pathlib import Path
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import bounds as _bounds
from .conditions import empirical_concentration, estimate_beta_sk, estimate_gamma_k
import jsonschema

from .errors import ConfigError, EmptyTruthSupport, SparsePoissonError
from .likelihood import heldout_loglik_lasso, heldout_loglik_ml, log_bayes_factor
from .model import (
    GroundTruth,
    build_model,
    half_normal_design,
    ingest_csv,
    make_rng,
    random_sparse_truth,
    uniform_design,
)
from .solver import (
    FeasibilityBudget,
    SolverOptions,
    keep_largest,
    solve_ml,
    solve_rescaled_lasso,
    threshold_support,
)
from .stats import linear_fit, mann_kendall, mean_stderr, spearman

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentResult",
    "TrialRecord",
    "support_metrics",
    "derive_seed",
    "run_experiment",
    "run_transition_vs_n",
    "run_transition_vs_k",
    "run_roc",
    "run_tightness",
    "run_beta_vs_s",
    "run_concentration",
    "run_model_comparison",
    "bernstein_exceedance",
    "config_schema",
    "list_presets",
    "load_config",
]

# generator streams
DESIGN, TRUTH, NOISE, SOLVER, SPLIT, PROBES = range(1, 7)

EXPERIMENTS = (
    "transition_vs_n",
    "transition_vs_k",
    "roc",
    "tightness",
    "beta_vs_s",
    "concentration",
    "model_comparison",
)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit seed for ``(seed, *keys)``."""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _rng(seed, *keys):
    return make_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    seed: int = 0
    p: int = 100
    k: int = 10
    s: float = 1.0
    lambda0: float = 100.0
    n: Optional[int] = None
    n_grid: Optional[tuple] = None
    k_grid: Optional[tuple] = None
    s_grid: Optional[tuple] = None
    threshold: float = 1e-4
    threshold_grid: Optional[tuple] = None
    threshold_per_k: bool = False
    m: int = 10
    design: str = "half_normal"
    design_scale: float = 1.0
    estimators: tuple = ("ml", "rescaled_lasso")
    solver_tol: float = 1e-8
    solver_max_iters: int = 50_000
    solver_restarts: int = 5
    budget_factor: float = 1.0
    epsilon: float = 0.01
    num_samples: int = 100_000
    gamma_samples: int = 10_000
    num_probes: int = 20
    delta: float = 0.1
    train_fraction: float = 0.8
    data: Optional[dict] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        for key, val in d.items():
            kw[key] = tuple(val) if isinstance(val, list) else val
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        for name in ("n_grid", "k_grid", "s_grid", "threshold_grid"):
            g = getattr(self, name)
            if g is not None and len(g) == 0:
                raise ConfigError(f"{name} must be non-empty")
        for name in ("s", "lambda0", "threshold", "design_scale", "epsilon", "budget_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_grid is not None and list(self.n_grid) != sorted(self.n_grid):
            raise ConfigError("n_grid must be ascending")
        if self.threshold_grid is not None and list(self.threshold_grid) != sorted(self.threshold_grid, reverse=True):
            raise ConfigError("threshold_grid must be descending")
        for est in self.estimators:
            if est not in ("ml", "rescaled_lasso"):
                raise ConfigError(f"unknown estimator {est!r}")
        if self.design not in ("uniform", "half_normal"):
            raise ConfigError(f"unknown design {self.design!r}")

    def solver_options(self, seed: int) -> SolverOptions:
        return SolverOptions(
            max_iters=self.solver_max_iters,
            tol=self.solver_tol,
            seed=seed,
            restarts=self.solver_restarts,
        )

    def make_design(self, n: int, p: int, rng) -> np.ndarray:
        if self.design == "uniform":
            return uniform_design(n, p, rng, self.design_scale)
        return half_normal_design(n, p, rng, self.design_scale)


def config_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("presets/config.schema.json").read_text())


def list_presets() -> list[str]:
    d = resources.files(__package__).joinpath("presets")
    return sorted(f.name[:-5] for f in d.iterdir() if f.name.endswith(".json") and not f.name.endswith(".schema.json"))


def validate_config_dict(d) -> None:
    """Validate against the bundled JSON schema; the message names the failing path."""
    try:
        jsonschema.validate(d, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        rule = "/".join(str(x) for x in exc.absolute_schema_path)
        raise ConfigError(f"invalid config at {where}: {exc.message} (schema: {rule})") from None


def load_config(source) -> ExperimentConfig:
    """Config from a dict, a JSON file path or a bundled preset name.

    Relative data paths in a file config resolve against the file's directory.
    """
    base = None
    if isinstance(source, dict):
        d = dict(source)
    else:
        path = Path(source)
        if not path.exists() and str(source) in list_presets():
            text = resources.files(__package__).joinpath(f"presets/{source}.json").read_text()
        else:
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            base = path.parent
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from None
    validate_config_dict(d)
    if base is not None and d.get("data"):
        d["data"] = {k: (str(base / v) if k != "budget" and not Path(v).is_absolute() else v) for k, v in d["data"].items()}
    return ExperimentConfig.from_dict(d)


@dataclass
class TrialRecord:
    trial: int
    seed: int
    estimator: str
    n: int
    k: int
    s: float
    l2_error: float
    support_success: int
    detections: int
    false_alarms: int
    threshold: float
    converged: int
    iterations: int
    runtime: float = field(default=0.0, compare=False)

    # wall-clock time is not written to records.csv (outputs must be reproducible)
    CSV_FIELDS = (
        "trial", "seed", "estimator", "n", "k", "s", "threshold", "l2_error",
        "support_success", "detections", "false_alarms", "converged", "iterations",
    )

    def row(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: dict
    runtime: float = 0.0

    def record_rows(self) -> list[dict]:
        return [r.row() if isinstance(r, TrialRecord) else r for r in self.records]


def support_metrics(w_hat, w_star, t: float) -> dict:
    """Exact-support success, detection and false-alarm rates after thresholding at ``t``."""
    _, S_hat = threshold_support(w_hat, t)
    _, S_true = threshold_support(w_star, t)
    w_star = np.asarray(w_star)
    p = w_star.size
    S_hat, S_true = set(S_hat.tolist()), set(S_true.tolist())
    det = len(S_hat & S_true)
    fa = len(S_hat - S_true)
    out = {
        "success": int(S_hat == S_true),
        "detections": det,
        "false_alarms": fa,
        "PD": det / len(S_true) if S_true else float("nan"),
        "PF": fa / (p - len(S_true)) if p > len(S_true) else 0.0,
        "pd_undefined": not S_true,
    }
    return out


def _pd_or_raise(w_hat, w_star, t):
    m = support_metrics(w_hat, w_star, t)
    if m["pd_undefined"]:
        raise EmptyTruthSupport("detection rate undefined for an empty true support")
    return m


def _fit(est: str, model, y, budget, opts):
    if est == "ml":
        return solve_ml(model, y, budget, opts)
    return solve_rescaled_lasso(model, y, budget, opts)


def _map(fn, tasks, workers: int):
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _record(cfg, trial, seed, est, n, truth: GroundTruth, res, t, runtime) -> TrialRecord:
    m = support_metrics(res.w_hat, truth.w_star, t)
    return TrialRecord(
        trial=trial,
        seed=seed,
        estimator=est,
        n=n,
        k=truth.k,
        s=truth.s,
        l2_error=float(np.linalg.norm(res.w_hat - truth.w_star)),
        support_success=m["success"],
        detections=m["detections"],
        false_alarms=m["false_alarms"],
        threshold=t,
        converged=int(res.converged),
        iterations=res.iterations,
        runtime=runtime,
    )


def _solve_and_record(cfg, trial, model, y, truth, thresholds, n):
    budget = FeasibilityBudget.constrained(cfg.budget_factor * truth.s)
    seed = derive_seed(cfg.seed, SOLVER, trial, n)
    out = []
    for est in cfg.estimators:
        t0 = time.perf_counter()
        try:
            res = _fit(est, model, y, budget, cfg.solver_options(seed))
        except SparsePoissonError:
            # a failed solve counts as a failed recovery
            continue
        dt = time.perf_counter() - t0
        for t in thresholds:
            out.append(_record(cfg, trial, seed, est, n, truth, res, t, dt))
    return out


def _success_curve(records, key: str, estimators) -> dict:
    curves = {}
    for est in estimators:
        pts = {}
        for r in records:
            if r.estimator == est:
                pts.setdefault(getattr(r, key), []).append(r.support_success)
        curve = []
        for x in sorted(pts):
            mean, se = mean_stderr(pts[x])
            curve.append({key: x, "success": mean, "stderr": se, "trials": len(pts[x])})
        curves[est] = curve
    return curves


def _first_reaching(curve, key: str, level: float):
    for pt in curve:
        if pt["success"] >= level:
            return pt[key]
    return None


# ---------------------------------------------------------------------------
# transition in n


def _trial_vs_n(args):
    cfg, A_full, trial = args
    n_max = A_full.shape[0]
    truth = random_sparse_truth(cfg.p, cfg.k, cfg.s, _rng(cfg.seed, TRUTH, trial))
    full = build_model(A_full, np.full(n_max, cfg.lambda0))
    lam = full.lambda0 + full.A @ truth.w_star
    y_full = _rng(cfg.seed, NOISE, trial).poisson(lam).astype(np.int64)
    recs = []
    for n in cfg.n_grid:
        recs += _solve_and_record(cfg, trial, full.head(n), y_full[:n], truth, [cfg.threshold], n)
    return recs


def run_transition_vs_n(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Support-recovery probability versus the number of observations.

    One design matrix is drawn for the largest ``n`` and its leading rows are
    used for smaller ``n``; each trial draws a fresh ground truth and noise.
    """
    if cfg.n_grid is None:
        raise ConfigError("transition_vs_n needs n_grid")
    A_full = cfg.make_design(max(cfg.n_grid), cfg.p, _rng(cfg.seed, DESIGN))
    t0 = time.perf_counter()
    recs = sum(_map(_trial_vs_n, [(cfg, A_full, j) for j in range(cfg.m)], workers), [])
    recs.sort(key=lambda r: (r.trial, r.n, r.estimator))
    curves = _success_curve(recs, "n", cfg.estimators)
    summary = {"curves": curves, "n_at_0.9": {e: _first_reaching(c, "n", 0.9) for e, c in curves.items()}}
    if cfg.m == 1:
        summary["stderr_undefined"] = True
    a, b = summary["n_at_0.9"].get("ml"), summary["n_at_0.9"].get("rescaled_lasso")
    summary["n_ratio_lasso_over_ml"] = (b / a) if a and b else None
    return ExperimentResult(cfg, recs, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# transition in k


def _t_for_k(cfg, k):
    return cfg.threshold / k if cfg.threshold_per_k else cfg.threshold


def _trial_vs_k(args):
    cfg, A, trial = args
    model = build_model(A, np.full(A.shape[0], cfg.lambda0))
    recs = []
    for ki, k in enumerate(cfg.k_grid):
        truth = random_sparse_truth(cfg.p, k, cfg.s, _rng(cfg.seed, TRUTH, trial, ki))
        lam = model.lambda0 + model.A @ truth.w_star
        y = _rng(cfg.seed, NOISE, trial, ki).poisson(lam).astype(np.int64)
        recs += _solve_and_record(cfg, trial, model, y, truth, [_t_for_k(cfg, k)], model.n)
    return recs


def run_transition_vs_k(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Support-recovery probability versus sparsity at fixed ``n`` (threshold may scale as ``1/k``)."""
    if cfg.k_grid is None or cfg.n is None:
        raise ConfigError("transition_vs_k needs k_grid and n")
    A = cfg.make_design(cfg.n, cfg.p, _rng(cfg.seed, DESIGN))
    t0 = time.perf_counter()
    recs = sum(_map(_trial_vs_k, [(cfg, A, j) for j in range(cfg.m)], workers), [])
    recs.sort(key=lambda r: (r.trial, r.k, r.estimator))
    curves = _success_curve(recs, "k", cfg.estimators)
    return ExperimentResult(cfg, recs, {"curves": curves}, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# ROC


def _roc_thresholds(cfg) -> list:
    grid = cfg.threshold_grid or tuple(10.0 ** np.linspace(0, -3, 13))
    return [t / cfg.k if cfg.threshold_per_k else t for t in grid]


def _trial_roc(args):
    cfg, A, trial = args
    model = build_model(A, np.full(A.shape[0], cfg.lambda0))
    truth = random_sparse_truth(cfg.p, cfg.k, cfg.s, _rng(cfg.seed, TRUTH, trial))
    lam = model.lambda0 + model.A @ truth.w_star
    y = _rng(cfg.seed, NOISE, trial).poisson(lam).astype(np.int64)
    return _solve_and_record(cfg, trial, model, y, truth, _roc_thresholds(cfg), model.n)


def roc_curves(records, estimators, p: int) -> dict:
    out = {}
    for est in estimators:
        by_t = {}
        for r in records:
            if r.estimator == est:
                by_t.setdefault(r.threshold, []).append(r)
        pts = []
        for t in sorted(by_t, reverse=True):
            rs = by_t[t]
            pd = [r.detections / r.k for r in rs]
            pf = [r.false_alarms / (p - r.k) for r in rs]
            pd_m, pd_se = mean_stderr(pd)
            pf_m, pf_se = mean_stderr(pf)
            pts.append({"threshold": t, "PD": pd_m, "PD_stderr": pd_se, "PF": pf_m, "PF_stderr": pf_se})
        out[est] = pts
    return out


def _interp_curve(pts, pf_grid, key):
    pf = np.array([q["PF"] for q in pts])
    val = np.array([q[key] if q[key] is not None else 0.0 for q in pts])
    order = np.argsort(pf, kind="stable")
    pf, val = pf[order], val[order]
    # PF may repeat while PD rises; keep the best PD at each PF (upper ROC envelope)
    uniq, idx = np.unique(pf, return_index=True)
    best = np.array([val[pf == u].max() for u in uniq])
    return np.interp(pf_grid, uniq, best)


def compare_roc(curves: dict, points: int = 11) -> list:
    """ML vs rescaled LASSO detection rate on a common false-alarm grid (intersection of PF ranges)."""
    ml, ls = curves["ml"], curves["rescaled_lasso"]
    lo = max(min(q["PF"] for q in ml), min(q["PF"] for q in ls))
    hi = min(max(q["PF"] for q in ml), max(q["PF"] for q in ls))
    grid = np.linspace(lo, hi, points) if hi > lo else np.array([lo])
    pd_ml = _interp_curve(ml, grid, "PD")
    pd_ls = _interp_curve(ls, grid, "PD")
    se_ml = _interp_curve(ml, grid, "PD_stderr")
    se_ls = _interp_curve(ls, grid, "PD_stderr")
    rows = []
    for i, g in enumerate(grid):
        pooled = math.sqrt(se_ml[i] ** 2 + se_ls[i] ** 2)
        rows.append({
            "PF": float(g),
            "PD_ml": float(pd_ml[i]),
            "PD_lasso": float(pd_ls[i]),
            "pooled_stderr": pooled,
            "ml_not_worse": bool(pd_ml[i] >= pd_ls[i] - pooled),
        })
    return rows


def run_roc(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Average detection vs false-alarm rates over a descending threshold grid, one fit per trial."""
    if cfg.n is None:
        raise ConfigError("roc needs n")
    A = cfg.make_design(cfg.n, cfg.p, _rng(cfg.seed, DESIGN))
    t0 = time.perf_counter()
    recs = sum(_map(_trial_roc, [(cfg, A, j) for j in range(cfg.m)], workers), [])
    recs.sort(key=lambda r: (r.trial, r.estimator, -r.threshold))
    curves = roc_curves(recs, cfg.estimators, cfg.p)
    summary = {"roc": curves}
    if set(cfg.estimators) == {"ml", "rescaled_lasso"}:
        summary["comparison"] = compare_roc(curves)
    return ExperimentResult(cfg, recs, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# tightness of the error bound


def _trial_tightness(args):
    cfg, A_full, trial, si, s = args
    base = random_sparse_truth(cfg.p, cfg.k, 1.0, _rng(cfg.seed, TRUTH, trial))
    truth = GroundTruth(base.w_star * s)
    full = build_model(A_full, np.full(A_full.shape[0], cfg.lambda0))
    lam = full.lambda0 + full.A @ truth.w_star
    y_full = _rng(cfg.seed, NOISE, trial, si).poisson(lam).astype(np.int64)
    recs = []
    for n in cfg.n_grid:
        recs += _solve_and_record(cfg, trial, full.head(n), y_full[:n], truth, [cfg.threshold], n)
    return recs


def run_tightness(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Mean l2 error of the ML estimate against the evaluated error bound over an (s, n) grid.

    The restricted-eigenvalue constant is estimated on each design by
    sampling; universal constants are 1, so the regression slope estimates
    the effective constant.
    """
    if cfg.n_grid is None or cfg.s_grid is None:
        raise ConfigError("tightness needs n_grid and s_grid")
    cfg_ml = ExperimentConfig.from_dict({**cfg.to_dict(), "estimators": ["ml"]})
    A_full = cfg.make_design(max(cfg.n_grid), cfg.p, _rng(cfg.seed, DESIGN))
    t0 = time.perf_counter()
    tasks = [(cfg_ml, A_full, j, si, s) for si, s in enumerate(cfg.s_grid) for j in range(cfg.m)]
    recs = sum(_map(_trial_tightness, tasks, workers), [])
    recs.sort(key=lambda r: (r.s, r.trial, r.n))
    gammas = {n: estimate_gamma_k(A_full[:n], cfg.k, cfg.gamma_samples, derive_seed(cfg.seed, DESIGN, n)) for n in cfg.n_grid}
    points = []
    for s in cfg.s_grid:
        for n in cfg.n_grid:
            errs = [r.l2_error for r in recs if r.s == s and r.n == n]
            lam_min = cfg.lambda0  # lower bound on every rate
            b = _bounds.corollary2_error_bound(s, gammas[n], n, lam_min)
            mean, se = mean_stderr(errs)
            points.append({
                "s": s, "n": n, "gamma_hat": gammas[n], "mean_error": mean, "stderr": se,
                "bound": None if b.degenerate else b.error_bound, "degenerate": b.degenerate,
                "below_floor": b.below_floor,
            })
    usable = [q for q in points if not q["degenerate"]]
    summary = {"points": points}
    if len(usable) >= 3:
        summary["regression"] = linear_fit([q["bound"] for q in usable], [q["mean_error"] for q in usable])
    trends_n, trends_s = {}, {}
    for s in cfg.s_grid:
        seq = [q["mean_error"] for q in points if q["s"] == s]
        trends_n[str(s)] = asdict(mann_kendall(seq, "decreasing"))
    for n in cfg.n_grid:
        seq = [q["mean_error"] for q in points if q["n"] == n]
        if len(seq) >= 2:
            trends_s[str(n)] = asdict(mann_kendall(seq, "increasing"))
    summary["trend_in_n"] = trends_n
    summary["trend_in_s"] = trends_s
    return ExperimentResult(cfg, recs, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# beta versus s


def run_beta_vs_s(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Sampled likelihood-perturbation rate over a grid of signal amplitudes.

    A single k-sparse direction is scaled to each amplitude and the same
    seeded direction stream is used at every grid point.
    """
    if cfg.s_grid is None or cfg.n is None:
        raise ConfigError("beta_vs_s needs s_grid and n")
    A = cfg.make_design(cfg.n, cfg.p, _rng(cfg.seed, DESIGN))
    model = build_model(A, np.full(cfg.n, cfg.lambda0))
    base = random_sparse_truth(cfg.p, cfg.k, 1.0, _rng(cfg.seed, TRUTH))
    t0 = time.perf_counter()
    rows = []
    for s in cfg.s_grid:
        truth = GroundTruth(base.w_star * s)
        est = estimate_beta_sk(model, truth, cfg.epsilon, cfg.num_samples, derive_seed(cfg.seed, PROBES))
        rows.append({
            "s": s, "beta_sk": est.beta_sk, "delta_sk": est.delta_sk, "epsilon": cfg.epsilon,
            "num_samples": est.num_samples, "acceptance_ratio": est.acceptance_ratio,
        })
    betas = [r["beta_sk"] for r in rows]
    summary = {
        "points": rows,
        "spearman_rho": spearman(cfg.s_grid, betas) if len(betas) > 1 else None,
        "strictly_decreasing": bool(all(b2 < b1 for b1, b2 in zip(betas, betas[1:]))),
    }
    return ExperimentResult(cfg, rows, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# concentration


def run_concentration(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Exceedance probability of the sup-deviation between the empirical and expected losses."""
    if cfg.n_grid is None:
        raise ConfigError("concentration needs n_grid")
    n_max = max(cfg.n_grid)
    A = cfg.make_design(n_max, cfg.p, _rng(cfg.seed, DESIGN))
    model = build_model(A, np.full(n_max, cfg.lambda0))
    truth = random_sparse_truth(cfg.p, cfg.k, cfg.s, _rng(cfg.seed, TRUTH))
    rng = _rng(cfg.seed, PROBES)
    probes = rng.dirichlet(np.ones(cfg.p), size=cfg.num_probes) * (cfg.s * rng.random(cfg.num_probes))[:, None]
    probes = np.vstack([truth.w_star, probes])
    t0 = time.perf_counter()
    pts = empirical_concentration(model, truth, cfg.m, probes, cfg.delta, derive_seed(cfg.seed, NOISE), cfg.n_grid)
    rows = [asdict(q) for q in pts]
    noise = 2.0 / math.sqrt(cfg.m)
    probs = [q.probability for q in pts]
    summary = {
        "points": rows,
        "noise_allowance": noise,
        "non_increasing_within_noise": bool(all(b <= a + noise for a, b in zip(probs, probs[1:]))),
    }
    return ExperimentResult(cfg, rows, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# model comparison


def _comparison_on(cfg, model, y, budget_s, k_grid, split_rng, solver_seed):
    budget = FeasibilityBudget.constrained(budget_s)
    opts = cfg.solver_options(solver_seed)
    w_ml = solve_ml(model, y, budget, opts).w_hat
    w_ls = solve_rescaled_lasso(model, y, budget, opts).w_hat
    bfs = {int(kk): log_bayes_factor(model, y, keep_largest(w_ml, kk), keep_largest(w_ls, kk)) for kk in k_grid}
    perm = split_rng.permutation(model.n)
    n_train = int(round(cfg.train_fraction * model.n))
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    m_tr, m_te = model.subset(tr), model.subset(te)
    y = np.asarray(y)
    v_ml = solve_ml(m_tr, y[tr], budget, opts).w_hat
    v_ls = solve_rescaled_lasso(m_tr, y[tr], budget, opts).w_hat
    l_ml = heldout_loglik_ml(m_te, y[te], v_ml)
    l_ls = heldout_loglik_lasso(m_te, y[te], v_ls)
    return bfs, l_ml, l_ls


def _trial_comparison(args):
    cfg, trial = args
    n = cfg.n
    A = cfg.make_design(n, cfg.p, _rng(cfg.seed, DESIGN, trial))
    model = build_model(A, np.full(n, cfg.lambda0))
    truth = random_sparse_truth(cfg.p, cfg.k, cfg.s, _rng(cfg.seed, TRUTH, trial))
    lam = model.lambda0 + model.A @ truth.w_star
    y = _rng(cfg.seed, NOISE, trial).poisson(lam).astype(np.int64)
    k_grid = cfg.k_grid or (cfg.k,)
    bfs, l_ml, l_ls = _comparison_on(
        cfg, model, y, cfg.budget_factor * truth.s, k_grid,
        _rng(cfg.seed, SPLIT, trial), derive_seed(cfg.seed, SOLVER, trial),
    )
    return [
        {"trial": trial, "k": kk, "n": n, "log_bayes_factor": bf,
         "heldout_loglik_ml": l_ml, "heldout_loglik_lasso": l_ls}
        for kk, bf in bfs.items()
    ]


def run_model_comparison(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Bayes factors over sparsity levels plus an 80/20 held-out likelihood comparison.

    Runs ``m`` synthetic datasets, or a single ingested dataset when
    ``data`` names CSV files (``A``, ``y``, ``lambda0``) and a ``budget``.
    """
    t0 = time.perf_counter()
    if cfg.data:
        model, obs = ingest_csv(cfg.data["A"], cfg.data["y"], cfg.data["lambda0"])
        if "budget" not in cfg.data:
            raise ConfigError("ingested data needs a 'budget' (l1 constraint s)")
        k_grid = cfg.k_grid or (cfg.k,)
        bfs, l_ml, l_ls = _comparison_on(
            cfg, model, obs.y, float(cfg.data["budget"]), k_grid,
            _rng(cfg.seed, SPLIT), derive_seed(cfg.seed, SOLVER),
        )
        rows = [{"trial": 0, "k": kk, "n": model.n, "log_bayes_factor": bf,
                 "heldout_loglik_ml": l_ml, "heldout_loglik_lasso": l_ls} for kk, bf in bfs.items()]
    else:
        if cfg.n is None:
            raise ConfigError("model_comparison needs n for synthetic data")
        rows = sum(_map(_trial_comparison, [(cfg, j) for j in range(cfg.m)], workers), [])
    rows.sort(key=lambda r: (r["trial"], r["k"]))
    by_k = {}
    for r in rows:
        by_k.setdefault(r["k"], []).append(r["log_bayes_factor"])
    per_trial = {r["trial"]: r for r in rows}
    wins = [r["heldout_loglik_ml"] > r["heldout_loglik_lasso"] for r in per_trial.values()]
    n = rows[0]["n"] if rows else 0
    summary = {
        "log_bayes_factor": {
            str(kk): {"mean": mean_stderr(v)[0], "stderr": mean_stderr(v)[1],
                      "mean_abs_per_obs": float(np.mean(np.abs(v)) / n) if n else None}
            for kk, v in sorted(by_k.items())
        },
        "heldout_ml_wins_fraction": float(np.mean(wins)) if wins else None,
        "heldout_loglik_ml_mean": float(np.mean([r["heldout_loglik_ml"] for r in per_trial.values()])),
        "heldout_loglik_lasso_mean": float(np.mean([r["heldout_loglik_lasso"] for r in per_trial.values()])),
    }
    return ExperimentResult(cfg, rows, summary, time.perf_counter() - t0)


_RUNNERS = {
    "transition_vs_n": run_transition_vs_n,
    "transition_vs_k": run_transition_vs_k,
    "roc": run_roc,
    "tightness": run_tightness,
    "beta_vs_s": run_beta_vs_s,
    "concentration": run_concentration,
    "model_comparison": run_model_comparison,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    return _RUNNERS[cfg.experiment](cfg, workers)


def bernstein_exceedance(rates, t: float, trials: int, seed: int = 0) -> dict:
    """Monte Carlo frequency of ``|mean(y - lambda)| >= (2t/n) sqrt(sum lambda)`` for Poisson counts."""
    lam = np.asarray(rates, dtype=np.float64)
    b = _bounds.bernstein_tail(lam, t)
    Y = make_rng(seed).poisson(lam, size=(trials, lam.size))
    dev = np.abs((Y - lam[None, :]).mean(axis=1))
    freq = float(np.mean(dev >= b.deviation_threshold))
    return {"t": t, "frequency": freq, "probability_bound": b.probability_bound,
            "deviation_threshold": b.deviation_threshold, "t_max": b.t_max, "trials": trials}


def jsonable(obj):
    """Recursively replace NaN by null and infinities by strings, numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_records_csv(rows: list[dict], path) -> None:
    """One row per record; floats use the shortest round-tripping repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in jsonable(r).items()})
