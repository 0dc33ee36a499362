"""Sampling estimates of the restricted eigenvalue and likelihood-perturbation constants.

Exact computation of either constant is a non-convex minimization over a
cone (NP-hard in general), so every estimate here is a minimum over a finite
set of sampled directions and is therefore an *upper* bound on the true
constant.  All singleton directions ``+-e_j`` that are admissible are always
included in the sample set.

Samples are drawn in fixed-size chunks, chunk ``c`` using its own generator
seeded with ``(seed, c)``.  A run with fewer samples therefore evaluates a
prefix of the directions seen by a run with more samples, and chunks can be
evaluated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasiblePerturbation, InvalidSparsity, NoFeasibleDirection
from .model import GroundTruth, PoissonLinearModel, make_rng

__all__ = [
    "ConeDirection",
    "ConditionEstimate",
    "Theorem2ChainReport",
    "ConcentrationPoint",
    "sample_cone_direction",
    "estimate_gamma_k",
    "qbar_perturbation",
    "perturbation_values",
    "feasible_perturbation_directions",
    "estimate_beta_sk",
    "verify_theorem2_chain",
    "empirical_concentration",
]

CHUNK = 2048
_FEAS_TOL = 1e-12
_CONE_STREAM = 0x636F6E65


@dataclass(frozen=True)
class ConeDirection:
    u: np.ndarray
    S: np.ndarray

    def in_cone(self) -> bool:
        mask = np.zeros(self.u.size, dtype=bool)
        mask[self.S] = True
        return float(np.abs(self.u[~mask]).sum()) <= float(np.abs(self.u[mask]).sum())


@dataclass
class ConditionEstimate:
    gamma_k: Optional[float]
    beta_sk: Optional[float]
    delta_sk: Optional[float]
    num_samples: int
    seed: int
    epsilon: Optional[float] = None
    acceptance_ratio: Optional[float] = None
    attempts: Optional[int] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)
    directions: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "gamma_k": self.gamma_k,
            "beta_sk": self.beta_sk,
            "delta_sk": self.delta_sk,
            "epsilon": self.epsilon,
            "num_samples": self.num_samples,
            "seed": self.seed,
            "acceptance_ratio": self.acceptance_ratio,
            "attempts": self.attempts,
            "estimate_kind": "upper bound (minimum over sampled directions)",
        }


def _phi(r: np.ndarray) -> np.ndarray:
    """``r - log1p(r)`` for ``r > -1``, accurate near zero."""
    r = np.asarray(r, dtype=np.float64)
    out = r - np.log1p(r)
    small = np.abs(r) < 1e-2
    if np.any(small):
        x = r[small]
        out[small] = x * x * (1 / 2 - x * (1 / 3 - x * (1 / 4 - x * (1 / 5 - x * (1 / 6 - x * (1 / 7 - x / 8))))))
    return out


# ---------------------------------------------------------------------------
# cone directions


def _cone_batch(rng: np.random.Generator, p: int, k: int, size: int) -> np.ndarray:
    """Unit rows in C(S) for uniformly random supports ``|S| = k``."""
    order = np.argsort(rng.random((size, p)), axis=1)
    on_s = np.zeros((size, p), dtype=bool)
    np.put_along_axis(on_s, order[:, :k], True, axis=1)
    u = rng.standard_normal((size, p))
    rho = rng.random(size)
    l1_s = np.where(on_s, np.abs(u), 0.0).sum(axis=1)
    l1_c = np.where(on_s, 0.0, np.abs(u)).sum(axis=1)
    scale_c = np.divide(rho * l1_s, l1_c, out=np.zeros(size), where=l1_c > 0)
    u = np.where(on_s, u, u * scale_c[:, None])
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u


def sample_cone_direction(p: int, k: int, seed) -> ConeDirection:
    """Random unit direction in the cone ``||u_{S^c}||_1 <= ||u_S||_1`` of a random ``|S| = k``.

    ``u_S`` is Gaussian; ``u_{S^c}`` is Gaussian rescaled to an l1 mass of
    ``rho * ||u_S||_1`` with ``rho ~ U(0, 1)``.
    """
    if not 1 <= k <= p:
        raise InvalidSparsity(f"need 1 <= k <= p, got k={k}, p={p}")
    rng = make_rng(seed)
    S = np.sort(rng.choice(p, size=k, replace=False))
    u = rng.standard_normal(p)
    rest = np.setdiff1d(np.arange(p), S)
    l1_s = np.abs(u[S]).sum()
    l1_c = np.abs(u[rest]).sum()
    if l1_c > 0:
        u[rest] *= rng.random() * l1_s / l1_c
    return ConeDirection(u / np.linalg.norm(u), S)


def _chunks(total: int):
    c = 0
    while total > 0:
        yield c, min(CHUNK, total)
        total -= CHUNK
        c += 1


def estimate_gamma_k(A, k: int, num_samples: int, seed: int = 0) -> float:
    """Minimum of ``(1/n) ||A u||^2`` over sampled unit cone directions and all ``e_j``."""
    A = np.asarray(A, dtype=np.float64)
    n, p = A.shape
    if not 1 <= k <= p:
        raise InvalidSparsity(f"need 1 <= k <= p, got k={k}, p={p}")
    if num_samples < 1:
        raise InvalidSparsity("num_samples must be >= 1")
    best = float(np.min(np.sum(A * A, axis=0)) / n)
    for c, m in _chunks(num_samples):
        U = _cone_batch(make_rng((seed, c)), p, k, CHUNK)[:m]
        AU = A @ U.T
        best = min(best, float(np.min(np.sum(AU * AU, axis=0)) / n))
    return best


# ---------------------------------------------------------------------------
# likelihood perturbations


def _truth_rates(model: PoissonLinearModel, truth: GroundTruth) -> np.ndarray:
    return model.lambda0 + model.A @ truth.w_star


def perturbation_values(model: PoissonLinearModel, truth: GroundTruth, U: np.ndarray, epsilon: float) -> np.ndarray:
    """``f(eps * u) = Qbar(w* + eps u) - Qbar(w*)`` for each row ``u`` of ``U``."""
    lam = _truth_rates(model, truth)
    X = (model.A @ np.atleast_2d(U).T) * epsilon
    R = X / lam[:, None]
    return (lam @ _phi(R)) / model.n


def _is_feasible(truth: GroundTruth, U: np.ndarray, epsilon: float, budget: float) -> np.ndarray:
    W = truth.w_star[None, :] + epsilon * np.atleast_2d(U)
    return (W.min(axis=1) >= -_FEAS_TOL) & (W.sum(axis=1) <= budget + _FEAS_TOL * max(1.0, budget))


def qbar_perturbation(model: PoissonLinearModel, truth: GroundTruth, u, epsilon: float, budget: Optional[float] = None) -> float:
    """Likelihood perturbation at ``w* + eps u``; rejects points outside the budget set."""
    vec = u.u if isinstance(u, ConeDirection) else np.asarray(u, dtype=np.float64)
    b = truth.s if budget is None else budget
    if not _is_feasible(truth, vec, epsilon, b)[0]:
        raise InfeasiblePerturbation("w* + eps*u leaves the nonnegative budget set")
    return float(perturbation_values(model, truth, vec, epsilon)[0])


def _feasible_batch(rng, truth: GroundTruth, size: int) -> np.ndarray:
    """Unit directions that keep ``w*`` in the orthant and do not increase its l1 mass.

    The cone is taken with respect to ``S = supp(w*)``: ``u_S`` is Gaussian
    (sign-flipped so ``sum(u_S) <= 0``) and ``u_{S^c}`` is nonnegative on a
    random subset with total mass ``rho * (-sum(u_S))``.  This implies
    ``||u_{S^c}||_1 <= ||u_S||_1``.
    """
    p = truth.w_star.size
    S = truth.support
    on_s = np.zeros(p, dtype=bool)
    on_s[S] = True
    k = S.size
    uS = rng.standard_normal((size, k))
    flip = uS.sum(axis=1) > 0
    uS[flip] *= -1.0
    mass = -uS.sum(axis=1) * rng.random(size)
    m_c = p - k
    uC = np.abs(rng.standard_normal((size, m_c)))
    keep = rng.integers(0, m_c + 1, size=size) if m_c else np.zeros(size, dtype=int)
    order = np.argsort(rng.random((size, m_c)), axis=1)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(m_c)[None, :].repeat(size, axis=0), axis=1)
    uC = np.where(ranks < keep[:, None], uC, 0.0)
    tot = uC.sum(axis=1)
    uC *= np.divide(mass, tot, out=np.zeros(size), where=tot > 0)[:, None]
    U = np.zeros((size, p))
    U[:, on_s] = uS
    U[:, ~on_s] = uC
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return U


def _singletons(truth: GroundTruth, epsilon: float, budget: float) -> np.ndarray:
    p = truth.w_star.size
    eye = np.eye(p)
    U = np.vstack([-eye, eye])
    return U[_is_feasible(truth, U, epsilon, budget)]


def feasible_perturbation_directions(truth: GroundTruth, epsilon: float, num_samples: int, seed: int, budget: Optional[float] = None, max_attempts: Optional[int] = None):
    """Yield ``(directions, attempts)`` chunks of feasible unit perturbation directions.

    The first chunk carries the admissible singleton directions.  Sampling
    stops after ``num_samples`` accepted directions or ``max_attempts``
    (default ``100 * num_samples``) draws.
    """
    if truth.k < 1:
        raise InvalidSparsity("perturbation sampling needs a nonzero ground truth")
    b = truth.s if budget is None else budget
    cap = 100 * num_samples if max_attempts is None else max_attempts
    yield _singletons(truth, epsilon, b), 0
    accepted = attempts = 0
    c = 0
    while accepted < num_samples and attempts < cap:
        U = _feasible_batch(make_rng((seed, c)), truth, CHUNK)
        c += 1
        take = min(CHUNK, cap - attempts)
        U = U[:take]
        ok = np.flatnonzero(_is_feasible(truth, U, epsilon, b))[: num_samples - accepted]
        # attempts counted up to the last accepted draw once the quota is met
        used = take if accepted + ok.size < num_samples else int(ok[-1]) + 1
        attempts += used
        accepted += ok.size
        yield U[ok], used


def estimate_beta_sk(
    model: PoissonLinearModel,
    truth: GroundTruth,
    epsilon: float,
    num_samples: int,
    seed: int = 0,
    budget: Optional[float] = None,
    return_samples: bool = False,
) -> ConditionEstimate:
    """Sampled perturbation floor ``delta`` and rate ``beta = delta / eps^2``."""
    if not epsilon > 0:
        raise InvalidSparsity("epsilon must be positive")
    if num_samples < 1:
        raise InvalidSparsity("num_samples must be >= 1")
    vals, dirs = [], []
    attempts = accepted = 0
    for U, used in feasible_perturbation_directions(truth, epsilon, num_samples, seed, budget):
        attempts += used
        if U.shape[0] == 0:
            continue
        if used:
            accepted += U.shape[0]
        vals.append(perturbation_values(model, truth, U, epsilon))
        if return_samples:
            dirs.append(U)
    if not vals:
        raise NoFeasibleDirection(
            f"no feasible perturbation of size eps={epsilon} found in {attempts} draws"
        )
    allv = np.concatenate(vals)
    delta = float(allv.min())
    return ConditionEstimate(
        gamma_k=None,
        beta_sk=delta / epsilon**2,
        delta_sk=delta,
        num_samples=int(allv.size),
        seed=seed,
        epsilon=epsilon,
        acceptance_ratio=accepted / attempts if attempts else None,
        attempts=attempts,
        values=allv if return_samples else None,
        directions=np.vstack(dirs) if return_samples else None,
    )


@dataclass
class Theorem2ChainReport:
    gamma_hat: float
    lambda_max: float
    epsilon: float
    bound: float
    bound_checks: int
    bound_passes: int
    min_margin: float
    cone_checks: int
    cone_passes: int

    @property
    def all_pass(self) -> bool:
        return self.bound_passes == self.bound_checks and self.cone_passes == self.cone_checks

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["all_pass"] = self.all_pass
        return d


def verify_theorem2_chain(
    model: PoissonLinearModel,
    truth: GroundTruth,
    epsilon: float,
    num_samples: int,
    seed: int = 0,
    gamma_hat: Optional[float] = None,
    lambda_max: Optional[float] = None,
    cone_samples: Optional[int] = None,
) -> Theorem2ChainReport:
    """Check ``f(eps u) >= gamma_k eps^2 / (9 lambda_max)`` and the cone property of errors.

    ``lambda_max`` defaults to ``max_i lambda0_i + s a_max``.  The cone check
    draws random points ``w`` of the budget set with ``s = ||w*||_1`` and
    verifies ``||u_{S^c}||_1 <= ||u_S||_1`` for ``u = w - w*``.
    """
    if gamma_hat is None:
        gamma_hat = estimate_gamma_k(model.A, truth.k, num_samples, seed)
    if lambda_max is None:
        lambda_max = model.lambda_max_bound(truth.s)
    bound = gamma_hat * epsilon**2 / (9.0 * lambda_max)
    checks = passes = 0
    margin = np.inf
    for U, _ in feasible_perturbation_directions(truth, epsilon, num_samples, seed):
        if U.shape[0] == 0:
            continue
        f = perturbation_values(model, truth, U, epsilon)
        checks += f.size
        passes += int(np.sum(f >= bound - 1e-10))
        margin = min(margin, float(np.min(f - bound)))

    rng = make_rng((seed, _CONE_STREAM))
    m = num_samples if cone_samples is None else cone_samples
    p = truth.w_star.size
    S = truth.support
    on_s = np.zeros(p, dtype=bool)
    on_s[S] = True
    W = rng.dirichlet(np.ones(p), size=m) * (truth.s * rng.random(m))[:, None]
    # sparse budget points exercise the boundary of the cone inequality
    W[: m // 2] *= rng.random((m // 2, p)) < 0.2
    Ud = W - truth.w_star[None, :]
    lhs = np.abs(Ud[:, ~on_s]).sum(axis=1)
    rhs = np.abs(Ud[:, on_s]).sum(axis=1)
    cone_pass = int(np.sum(lhs <= rhs + 1e-12))
    return Theorem2ChainReport(
        gamma_hat=float(gamma_hat),
        lambda_max=float(lambda_max),
        epsilon=float(epsilon),
        bound=float(bound),
        bound_checks=checks,
        bound_passes=passes,
        min_margin=float(margin),
        cone_checks=m,
        cone_passes=cone_pass,
    )


@dataclass(frozen=True)
class ConcentrationPoint:
    n: int
    probability: float
    stderr: float
    trials: int


def empirical_concentration(
    model: PoissonLinearModel,
    truth: GroundTruth,
    num_trials: int,
    probe_points: Sequence,
    delta: float,
    seed: int = 0,
    n_grid: Optional[Sequence[int]] = None,
) -> list[ConcentrationPoint]:
    """Monte Carlo estimate of ``P(max_probe |Q - Qbar| >= delta / 2)`` for each ``n``.

    Each ``n`` uses the first ``n`` rows of ``model``.  One count vector per
    trial is drawn for all rows and truncated, so the curves over ``n`` share
    random numbers.
    """
    n_grid = [model.n] if n_grid is None else [int(n) for n in n_grid]
    if max(n_grid) > model.n or min(n_grid) < 1:
        raise InvalidSparsity(f"n grid must lie in [1, {model.n}]")
    W = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    if np.any(W < 0):
        raise InfeasiblePerturbation("probe points must be nonnegative")
    lam_star = _truth_rates(model, truth)
    logs = np.log(model.lambda0[:, None] + model.A @ W.T)  # n x probes
    Y = make_rng(seed).poisson(lam_star, size=(num_trials, model.n)).astype(np.float64)
    D = Y - lam_star[None, :]
    out = []
    for n in n_grid:
        # Q - Qbar = -(1/n) sum_i (y_i - lam*_i) log(lam_w,i)
        dev = np.abs(D[:, :n] @ logs[:n]) / n
        exceed = (dev.max(axis=1) >= delta / 2).astype(float)
        prob = float(exceed.mean())
        se = float(np.sqrt(prob * (1 - prob) / num_trials))
        out.append(ConcentrationPoint(n, prob, se, num_trials))
    return out
