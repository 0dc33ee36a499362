"""First-order solvers for the constrained and penalized estimators.

Both estimators minimize a smooth loss over nonnegative weights, either with
an l1 budget (``w >= 0, sum(w) <= s``) or with a linear penalty
``eta * sum(w)``.  The solver is an accelerated proximal gradient method with
backtracking, step expansion and a function-value restart, so the
recorded objective trace never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidOptions, MaxItersExceeded, NonPositiveRate
from .model import ObservationSet, PoissonLinearModel, make_rng

__all__ = [
    "FeasibilityBudget",
    "SolverOptions",
    "SolveResult",
    "project_theta_s",
    "prox_nonneg_l1",
    "solve_ml",
    "solve_rescaled_lasso",
    "threshold_support",
    "keep_largest",
    "gradient_mapping_norm",
    "find_eta_for_budget",
]


@dataclass(frozen=True)
class FeasibilityBudget:
    mode: str
    value: float

    def __post_init__(self):
        if self.mode == "constrained":
            if not self.value > 0:
                raise InvalidOptions("budget s must be positive")
        elif self.mode == "penalized":
            if not self.value >= 0:
                raise InvalidOptions("penalty eta_s must be nonnegative")
        else:
            raise InvalidOptions(f"unknown budget mode {self.mode!r}")

    @classmethod
    def constrained(cls, s: float) -> "FeasibilityBudget":
        return cls("constrained", float(s))

    @classmethod
    def penalized(cls, eta: float) -> "FeasibilityBudget":
        return cls("penalized", float(eta))

    @property
    def is_constrained(self) -> bool:
        return self.mode == "constrained"

    def prox(self, v: np.ndarray, step: float) -> np.ndarray:
        if self.is_constrained:
            return project_theta_s(v, self.value)
        return prox_nonneg_l1(v, step * self.value)

    def penalty(self, w: np.ndarray) -> float:
        return 0.0 if self.is_constrained else self.value * float(w.sum())

    def to_json(self) -> dict:
        key = "s" if self.is_constrained else "eta"
        return {"mode": self.mode, key: self.value}


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 50_000
    tol: float = 1e-8
    seed: int = 0
    restarts: int = 5
    keep_trace: bool = False
    expand: float = 1.1
    strict: bool = False
    x0: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidOptions("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidOptions("tol must be positive")
        if self.restarts < 1:
            raise InvalidOptions("restarts must be >= 1")
        if self.expand < 1:
            raise InvalidOptions("expand must be >= 1")


@dataclass
class SolveResult:
    w_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    trace: Optional[list] = None
    grad_mapping_norm: float = float("nan")

    def to_json(self) -> dict:
        return {
            "w_hat": [float(x) for x in self.w_hat],
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_mapping_norm": self.grad_mapping_norm,
        }


def project_theta_s(v, s: float) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) <= s}``.

    Returns ``max(v - theta, 0)`` with ``theta = 0`` when the clipped vector
    already fits the budget, otherwise the sort-based simplex threshold.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.maximum(v, 0.0)
    # rounding slack so that a projected point maps to itself
    if w.sum() <= s * (1.0 + 4 * v.size * np.finfo(float).eps):
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - s
    ind = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u * ind > css)[-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    # v - theta cancels digits when |v| >> s; pull the sum back onto the budget
    total = w.sum()
    if total > s:
        w *= s / total
    return w


def prox_nonneg_l1(v, thresh: float) -> np.ndarray:
    """Prox of ``thresh * sum(w)`` plus the nonnegativity indicator: one-sided soft threshold."""
    return np.maximum(np.asarray(v, dtype=np.float64) - thresh, 0.0)


def _power_norm_sq(A: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||_2^2``."""
    if not np.any(A):
        return 0.0
    x = make_rng(seed).uniform(0.5, 1.0, size=A.shape[1])
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(iters):
        z = A.T @ (A @ x)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        new = float(x @ z)
        x = z / nz
        if abs(new - val) <= 1e-10 * new:
            val = new
            break
        val = new
    return val


def gradient_mapping_norm(w, grad, budget: FeasibilityBudget, step: float) -> float:
    return float(np.linalg.norm(w - budget.prox(w - step * grad, step)) / step)


Oracle = Callable[[np.ndarray], tuple]


def _apg(oracle: Oracle, budget: FeasibilityBudget, x0, step0, opts: SolverOptions) -> SolveResult:
    """Accelerated proximal gradient with backtracking and monotone restart.

    ``oracle(w)`` returns ``(loss, grad)`` and raises ``NonPositiveRate``
    outside the domain.  Extrapolated points outside the domain reset the
    momentum.
    """

    def full(w):
        f, g = oracle(w)
        return f + budget.penalty(w), g

    x = budget.prox(np.asarray(x0, dtype=np.float64), step0)
    fx, gx = full(x)
    z, fz, gz = x, fx, gx
    t = 1.0
    step = step0
    trace = [fx] if opts.keep_trace else None
    gnorm = gradient_mapping_norm(x, gx, budget, step)
    converged = gnorm <= opts.tol * (1.0 + abs(fx))
    it = 0
    while not converged and it < opts.max_iters:
        it += 1
        # backtracking from the extrapolated point z
        for _ in range(80):
            x_new = budget.prox(z - step * gz, step)
            d = x_new - z
            try:
                f_new, g_new = full(x_new)
            except NonPositiveRate:
                step *= 0.5
                continue
            smooth_new = f_new - budget.penalty(x_new)
            smooth_z = fz - budget.penalty(z)
            if smooth_new <= smooth_z + gz @ d + (d @ d) / (2 * step) + 1e-14 * abs(smooth_z):
                break
            step *= 0.5
        if f_new > fx:
            if z is x:
                # a plain proximal step failed to decrease: numerically stalled
                converged = gnorm <= opts.tol * (1.0 + abs(fx))
                break
            z, fz, gz, t = x, fx, gx, 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_new
        x_prev = x
        x, fx, gx = x_new, f_new, g_new
        if trace is not None:
            trace.append(fx)
        gnorm = gradient_mapping_norm(x, gx, budget, step)
        if gnorm <= opts.tol * (1.0 + abs(fx)):
            converged = True
            break
        step *= opts.expand
        t = t_new
        z = x + momentum * (x - x_prev)
        if momentum == 0.0:
            z, fz, gz = x, fx, gx
            continue
        try:
            fz, gz = full(z)
        except NonPositiveRate:
            z, fz, gz, t = x, fx, gx, 1.0
    result = SolveResult(x, float(fx), it, bool(converged), trace, gnorm)
    if opts.strict and not converged:
        raise MaxItersExceeded(result)
    return result


def _counts(y) -> np.ndarray:
    return y.y.astype(np.float64) if isinstance(y, ObservationSet) else np.asarray(y, dtype=np.float64)


def _check(model: PoissonLinearModel, y: np.ndarray):
    if y.shape[0] != model.n:
        raise InvalidOptions(f"{y.shape[0]} counts for a model with n={model.n}")


def solve_ml(model: PoissonLinearModel, y, budget: FeasibilityBudget, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Constrained (or penalized) Poisson maximum-likelihood estimate."""
    yv = _counts(y)
    _check(model, yv)
    lip = _power_norm_sq(model.A) / model.n * max(float(np.max(yv / model.lambda0**2)), 1e-12)
    step0 = 1.0 / lip if lip > 0 else 1.0

    A, lam0, n = model.A, model.lambda0, model.n

    def oracle(w):
        # extrapolated points may leave the orthant, so no sign check here
        aw = A @ w
        lam = lam0 + aw
        if lam.min() <= 0:
            raise NonPositiveRate("rate left the domain")
        return -(yv @ np.log(lam) - aw.sum()) / n, A.T @ (1.0 - yv / lam) / n

    x0 = opts.x0 if opts.x0 is not None else np.zeros(model.p)
    return _apg(oracle, budget, x0, step0, opts)


def _random_start(rng, p: int, budget: FeasibilityBudget, scale: float) -> np.ndarray:
    d = rng.dirichlet(np.ones(p))
    return d * scale * rng.uniform(0.0, 1.0)


def solve_rescaled_lasso(model: PoissonLinearModel, y, budget: FeasibilityBudget, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Rescaled-LASSO estimate, best of ``opts.restarts`` runs.

    The first run starts at zero (or ``opts.x0``); the others start at seeded
    random feasible points.
    """
    yv = _counts(y)
    _check(model, yv)
    lip = _power_norm_sq(model.A) / model.n * max(float(np.max(2 * yv**2 / model.lambda0**3)), 1e-12)
    step0 = 1.0 / lip if lip > 0 else 1.0

    A, lam0, n = model.A, model.lambda0, model.n

    def oracle(w):
        mu = lam0 + A @ w
        if mu.min() <= 0:
            raise NonPositiveRate("rate left the domain")
        r = yv / mu
        return np.sum((mu - yv) * (1.0 - r)) / n, A.T @ (1.0 - r * r) / n

    rng = make_rng(opts.seed)
    scale = budget.value if budget.is_constrained else max(1.0, float(np.mean(yv)))
    best = None
    for r in range(opts.restarts):
        if r == 0:
            x0 = opts.x0 if opts.x0 is not None else np.zeros(model.p)
        else:
            x0 = _random_start(rng, model.p, budget, scale)
        res = _apg(oracle, budget, x0, step0, replace(opts, strict=False))
        if best is None or res.objective < best.objective:
            best = res
    if opts.strict and not best.converged:
        raise MaxItersExceeded(best)
    return best


def threshold_support(w, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero every entry below ``t``; return the thresholded vector and surviving indices."""
    if not t > 0:
        raise InvalidOptions("threshold must be positive")
    w = np.asarray(w, dtype=np.float64)
    out = np.where(w >= t, w, 0.0)
    return out, np.flatnonzero(w >= t)


def keep_largest(w, k: int) -> np.ndarray:
    """k-sparse approximation: keep the ``k`` largest entries (ties broken by index)."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    if k <= 0:
        return out
    idx = np.argsort(-w, kind="stable")[:k]
    out[idx] = w[idx]
    return out


def find_eta_for_budget(model, y, s: float, opts: SolverOptions = SolverOptions(), tol: float = 1e-4, max_bisect: int = 100):
    """Bisection on the penalty so that the penalized ML solution has ``sum(w) = s``.

    Returns ``(eta, SolveResult)``.  The l1 mass of the penalized solution is
    non-increasing in ``eta``.
    """
    lo, hi = 0.0, 1.0
    res_lo = solve_ml(model, y, FeasibilityBudget.penalized(lo), opts)
    if res_lo.w_hat.sum() <= s:
        return lo, res_lo
    res_hi = solve_ml(model, y, FeasibilityBudget.penalized(hi), opts)
    while res_hi.w_hat.sum() > s:
        lo, hi = hi, 2 * hi
        res_hi = solve_ml(model, y, FeasibilityBudget.penalized(hi), opts)
    best = res_hi
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        res = solve_ml(model, y, FeasibilityBudget.penalized(mid), replace(opts, x0=best.w_hat))
        mass = res.w_hat.sum()
        best = res
        if abs(mass - s) <= tol:
            return mid, res
        if mass > s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), best
