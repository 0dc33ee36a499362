"""Objectives and model-comparison scores.

``Q`` is the normalized Poisson negative log-likelihood with constants
dropped; ``Qbar`` is its expectation under the true rates.  Held-out and
Bayes-factor scores use full log-PMFs (including ``log y!``) so they are
comparable across models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr

from .errors import DimensionMismatch, InvalidSigma, NegativeWeight, NonPositiveRate
from .model import GroundTruth, ObservationSet, PoissonLinearModel

__all__ = [
    "ObjectiveEval",
    "ModelComparisonReport",
    "q_value_grad",
    "qbar_value",
    "rescaled_lasso_value_grad",
    "poisson_logpmf",
    "discretized_gaussian_logpmf",
    "discretized_gaussian_pmf",
    "heldout_loglik_ml",
    "heldout_loglik_lasso",
    "log_bayes_factor",
]


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    gradient: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ModelComparisonReport:
    sparsity_level_k: int
    log_bayes_factor: float
    heldout_loglik_ml: float
    heldout_loglik_lasso: float


def _counts(y) -> np.ndarray:
    if isinstance(y, ObservationSet):
        return y.y.astype(np.float64)
    return np.asarray(y, dtype=np.float64).ravel()


def _rate_vector(model: PoissonLinearModel, w, check_sign=True) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != model.p:
        raise DimensionMismatch(f"w has length {w.shape[0]}, model has p={model.p}")
    if check_sign and np.any(w < 0):
        raise NegativeWeight("w must be nonnegative")
    lam = model.lambda0 + model.A @ w
    if np.any(lam <= 0):
        raise NonPositiveRate("rates lambda0 + A w must be positive")
    return lam


def q_value_grad(model: PoissonLinearModel, y, w, gradient: bool = True) -> ObjectiveEval:
    """``Q(w) = -(1/n) sum_i [y_i log(lambda0_i + a_i.w) - a_i.w]`` and its gradient."""
    y = _counts(y)
    lam = _rate_vector(model, w)
    n = model.n
    aw = lam - model.lambda0
    value = -(y @ np.log(lam) - aw.sum()) / n
    grad = model.A.T @ (1.0 - y / lam) / n if gradient else None
    return ObjectiveEval(float(value), grad)


def qbar_value(model: PoissonLinearModel, truth: GroundTruth, w) -> float:
    lam_star = model.lambda0 + model.A @ truth.w_star
    return q_value_grad(model, lam_star, w, gradient=False).value


def rescaled_lasso_value_grad(model: PoissonLinearModel, y, w, gradient: bool = True) -> ObjectiveEval:
    """Variance-rescaled squared loss ``(1/n) sum_i (y_i - mu_i)^2 / mu_i`` with ``mu = lambda0 + A w``."""
    y = _counts(y)
    mu = _rate_vector(model, w)
    r = y - mu
    value = float(np.sum(r * r / mu) / model.n)
    # d/dmu (y - mu)^2 / mu = 1 - y^2 / mu^2
    grad = model.A.T @ (1.0 - (y / mu) ** 2) / model.n if gradient else None
    return ObjectiveEval(value, grad)


def poisson_logpmf(y, mu) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    return y * np.log(mu) - mu - gammaln(y + 1.0)


def _log_diff_upper_tail(a, b):
    """``log(Qg(a) - Qg(b))`` for ``a < b``, stable in either tail."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty(np.broadcast(a, b).shape)
    a, b = np.broadcast_arrays(a, b)
    upper = a >= 0
    lower = b <= 0
    mid = ~(upper | lower)
    with np.errstate(divide="ignore"):
        # both edges in the upper tail: Qg(x) = Phi(-x)
        la, lb = log_ndtr(-a[upper]), log_ndtr(-b[upper])
        out[upper] = la + np.log1p(-np.exp(lb - la))
        # both edges in the lower tail: Qg(a) - Qg(b) = Phi(b) - Phi(a)
        la, lb = log_ndtr(a[lower]), log_ndtr(b[lower])
        out[lower] = lb + np.log1p(-np.exp(la - lb))
        out[mid] = np.log(ndtr(b[mid]) - ndtr(a[mid]))
    return out


def discretized_gaussian_logpmf(y, mu, sigma) -> np.ndarray:
    """Log of the integer-bucketed Gaussian PMF on ``y >= 0``.

    Bucket ``y`` carries the Gaussian mass of ``[y, y+1)``; the total mass of
    ``[0, inf)`` is ``Qg(-mu/sigma)`` and normalizes the PMF.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise InvalidSigma("sigma must be positive")
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    lo = (y - mu) / sigma
    hi = (y + 1.0 - mu) / sigma
    log_norm = log_ndtr(mu / sigma)  # log Qg(-mu/sigma)
    out = _log_diff_upper_tail(lo, hi) - log_norm
    return np.where(y >= 0, out, -np.inf)


def discretized_gaussian_pmf(y, mu, sigma):
    out = np.exp(discretized_gaussian_logpmf(y, mu, sigma))
    return float(out) if out.ndim == 0 else out


def heldout_loglik_ml(model_test: PoissonLinearModel, y_test, w_hat) -> float:
    """Poisson log-likelihood of held-out counts under the rates ``lambda0 + A w_hat``."""
    y = _counts(y_test)
    if model_test.n == 0 or y.size == 0:
        return 0.0
    mu = _rate_vector(model_test, w_hat)
    return float(np.sum(poisson_logpmf(y, mu)))


def heldout_loglik_lasso(model_test: PoissonLinearModel, y_test, w_hat) -> float:
    """Discretized-Gaussian log-likelihood with mean and variance ``lambda0 + A w_hat``."""
    y = _counts(y_test)
    if model_test.n == 0 or y.size == 0:
        return 0.0
    mu = _rate_vector(model_test, w_hat)
    return float(np.sum(discretized_gaussian_logpmf(y, mu, np.sqrt(mu))))


def log_bayes_factor(model: PoissonLinearModel, y, w_ml_k, w_lasso_k) -> float:
    """``log BF_k``: Poisson fit at the ML estimate vs discretized Gaussian at the LASSO estimate."""
    y = _counts(y)
    if y.size == 0:
        return 0.0
    return heldout_loglik_ml(model, y, w_ml_k) - heldout_loglik_lasso(model, y, w_lasso_k)
