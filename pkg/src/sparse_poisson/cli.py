"""Command-line front end.

Exit codes: 0 success, 1 unreadable/invalid input or config, 2 invalid flag
combination or out-of-range flag value, 3 solver hit its iteration cap
(the result is still written).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bounds
from .conditions import estimate_beta_sk, estimate_gamma_k
from .errors import ConfigError, MaxItersExceeded, ParseError, SparsePoissonError, TOutOfRange
from .experiments import dumps, load_config, run_experiment, write_records_csv
from .model import GroundTruth, build_model, ingest_csv, make_rng, random_sparse_truth, read_matrix_csv, read_vector_csv
from .solver import FeasibilityBudget, SolverOptions, solve_ml, solve_rescaled_lasso, threshold_support

EXIT_OK, EXIT_INPUT, EXIT_USAGE, EXIT_MAXITER = 0, 1, 2, 3


class UsageError(Exception):
    """Bad flag combination; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "0+unknown"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def make_manifest(config: dict, seed, started: str, outputs: list, **extra) -> dict:
    m = {
        "tool_version": tool_version(),
        "config_hash": config_hash(config),
        "seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    m.update(extra)
    return m


def _emit(payload: dict, out) -> None:
    text = dumps(payload)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    if (args.budget is None) == (args.eta is None):
        raise UsageError("exactly one of --budget and --eta is required")
    if args.threshold is not None and not args.threshold > 0:
        raise UsageError("--threshold must be positive")
    started = _now()
    try:
        lam0 = float(args.lambda0)
    except ValueError:
        lam0 = args.lambda0
    model, obs = ingest_csv(args.A, args.y, lam0)
    budget = FeasibilityBudget.constrained(args.budget) if args.budget is not None else FeasibilityBudget.penalized(args.eta)
    opts = SolverOptions(max_iters=args.max_iters, tol=args.tol, seed=args.seed, strict=True)
    solve = solve_ml if args.estimator == "ml" else solve_rescaled_lasso
    code = EXIT_OK
    try:
        res = solve(model, obs.y, budget, opts)
    except MaxItersExceeded as exc:
        res, code = exc.result, EXIT_MAXITER
    payload = {"estimator": args.estimator, "budget": budget.to_json(), **res.to_json()}
    if args.threshold is not None:
        _, idx = threshold_support(res.w_hat, args.threshold)
        payload["threshold"] = args.threshold
        payload["support"] = [int(i) for i in idx]
    cfg = {"command": "fit", "A": str(args.A), "y": str(args.y), "lambda0": str(args.lambda0),
           "budget": args.budget, "eta": args.eta, "estimator": args.estimator,
           "threshold": args.threshold, "seed": args.seed, "max_iters": args.max_iters, "tol": args.tol}
    payload["manifest"] = make_manifest(cfg, args.seed, started, [str(args.out) if args.out else "-"])
    _emit(payload, args.out)
    return code


# ---------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    started = _now()
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    result = run_experiment(cfg, workers=workers)
    cfg_dict = cfg.to_dict()
    h = config_hash(cfg_dict)
    out = Path(args.out) / cfg.experiment / h
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(result.record_rows(), out / "records.csv")
    (out / "summary.json").write_text(dumps({"config": cfg_dict, "summary": result.summary}), encoding="utf-8")
    outputs = ["records.csv", "summary.json", "manifest.json"]
    manifest = make_manifest(cfg_dict, cfg.seed, started, outputs, runtime_seconds=result.runtime, workers=workers)
    (out / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
    print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# conditions


def cmd_conditions(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if (args.s is None) != (args.epsilon is None):
        raise UsageError("--s and --epsilon must be given together")
    started = _now()
    model = build_model(read_matrix_csv(args.A), args.lambda0)
    payload = {"k": args.k, "gamma_k": estimate_gamma_k(model.A, args.k, args.samples, args.seed)}
    if args.s is not None:
        if args.w_star:
            truth = GroundTruth(read_vector_csv(args.w_star))
        else:
            truth = random_sparse_truth(model.p, args.k, args.s, make_rng((args.seed, 1)))
        est = estimate_beta_sk(model, truth, args.epsilon, args.samples, args.seed, budget=args.s)
        payload.update(est.to_json())
        payload["s"] = args.s
        payload["w_star"] = truth.w_star
    payload["num_samples"] = args.samples
    payload["seed"] = args.seed
    cfg = {"command": "conditions", "A": str(args.A), "k": args.k, "s": args.s, "epsilon": args.epsilon,
           "samples": args.samples, "seed": args.seed, "lambda0": args.lambda0,
           "w_star": str(args.w_star) if args.w_star else None}
    payload["manifest"] = make_manifest(cfg, args.seed, started, [str(args.out) if args.out else "-"])
    _emit(payload, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds


_REQUIRED = {
    "thm1": ("s", "k", "beta", "lambda_min", "epsilon", "e"),
    "cor1": ("s", "k", "gamma", "lambda_min", "epsilon", "e"),
    "cor2": ("s", "gamma", "n"),
    "thm4": ("p", "k", "s", "lambda_min", "epsilon", "e"),
    "bernstein": ("t",),
}


def cmd_bounds(args) -> int:
    missing = [f"--{f.replace('_', '-')}" for f in _REQUIRED[args.which] if getattr(args, f) is None]
    if args.which == "bernstein" and args.rates is None and (args.n is None or args.lam is None):
        missing.append("--rates or (--n and --lam)")
    if missing:
        raise UsageError(f"--which {args.which} needs {', '.join(missing)}")
    started = _now()
    a = args
    if a.which == "thm1":
        res = bounds.theorem1_requirements(a.s, a.k, a.beta, a.lambda_min, a.epsilon, a.e).to_json()
    elif a.which == "cor1":
        res = bounds.corollary1_requirements(a.s, a.k, a.gamma, a.lambda_min, a.epsilon, a.e).to_json()
    elif a.which == "cor2":
        if a.lambda_min is None:
            # the bound itself does not involve lambda_min; only its validity floor does
            res = bounds.corollary2_error_bound(a.s, a.gamma, a.n, 1.0).to_json()
            res.update(n_floor=None, below_floor=None)
            res["flags"] = [f for f in res["flags"] if "floor" not in f] + ["lambda_min not given: sample-size floor not evaluated"]
        else:
            res = bounds.corollary2_error_bound(a.s, a.gamma, a.n, a.lambda_min).to_json()
    elif a.which == "thm4":
        res = bounds.theorem4_requirements(a.p, a.k, a.s, a.lambda_min, a.epsilon, a.e).to_json()
    else:
        if a.rates is not None:
            lam = read_vector_csv(a.rates)
        else:
            lam = np.full(int(a.n), float(a.lam))
        try:
            res = bounds.bernstein_tail(lam, a.t).to_json()
        except TOutOfRange as exc:
            raise UsageError(str(exc)) from None
    cfg = {k: v for k, v in vars(args).items() if k != "func" and k != "out"}
    payload = {"which": args.which, "result": res}
    payload["manifest"] = make_manifest(cfg, None, started, [str(args.out) if args.out else "-"])
    _emit(payload, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse-poisson", description="Sparse Poisson recovery: fits, experiments, conditions, bounds.")
    p.add_argument("--version", action="version", version=tool_version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit an estimator on CSV data")
    f.add_argument("--A", required=True, help="CSV sensing matrix (n rows, p columns)")
    f.add_argument("--y", required=True, help="CSV counts")
    f.add_argument("--lambda0", required=True, help="CSV background rates, or a single number")
    f.add_argument("--budget", type=float, help="l1 budget s of the constrained estimator")
    f.add_argument("--eta", type=float, help="penalty weight of the penalized estimator")
    f.add_argument("--estimator", choices=("ml", "lasso"), default="ml")
    f.add_argument("--threshold", type=float)
    f.add_argument("--max-iters", type=int, default=50_000)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("experiment", help="run an experiment from a config file or preset name")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("conditions", help="estimate restricted-eigenvalue and perturbation constants")
    c.add_argument("--A", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--s", type=float)
    c.add_argument("--epsilon", type=float)
    c.add_argument("--lambda0", type=float, default=1.0)
    c.add_argument("--w-star", dest="w_star", help="CSV ground truth; drawn at random when omitted")
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_conditions)

    b = sub.add_parser("bounds", help="evaluate a closed-form bound")
    b.add_argument("--which", required=True, choices=tuple(_REQUIRED))
    for name, typ in (("s", float), ("k", int), ("p", int), ("n", int), ("beta", float), ("gamma", float),
                      ("lambda_min", float), ("epsilon", float), ("e", float), ("t", float), ("lam", float)):
        b.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    b.add_argument("--rates", help="CSV of Poisson rates for --which bernstein")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ParseError, ConfigError, SparsePoissonError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
