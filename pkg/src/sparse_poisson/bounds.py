"""Closed-form sample-complexity and error bounds.

The unnamed universal constants default to 1 and live in
:class:`BoundConstants`.  Logarithms are natural.  Inputs with ``s <= 1``
make ``log s <= 0`` and the bounds vacuous; such calls return a result with
``degenerate=True`` and NaN values instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidOptions, TOutOfRange

__all__ = [
    "BoundConstants",
    "Requirements",
    "ErrorBound",
    "BernsteinBound",
    "theorem1_requirements",
    "corollary1_requirements",
    "corollary2_error_bound",
    "theorem4_requirements",
    "bernstein_tail",
    "poisson_moment_constant",
]

_NAN = float("nan")


@dataclass(frozen=True)
class BoundConstants:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c_prime: float = 1.0
    C0: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    C_prime: float = 1.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not val > 0:
                raise InvalidOptions(f"constant {name} must be positive, got {val}")


@dataclass(frozen=True)
class Requirements:
    n_min: float
    epsilon_max: float
    degenerate: bool = False
    flags: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


@dataclass(frozen=True)
class ErrorBound:
    error_bound: float
    n_floor: float
    confidence: float
    below_floor: bool
    degenerate: bool = False
    flags: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


@dataclass(frozen=True)
class BernsteinBound:
    deviation_threshold: float
    probability_bound: float
    t_max: float
    L: float

    def to_json(self) -> dict:
        return asdict(self)


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        elif isinstance(v, tuple):
            out[k] = list(v)
        else:
            out[k] = v
    return out


def _degenerate_requirements(s) -> Requirements:
    return Requirements(_NAN, _NAN, True, (f"degenerate scale: s={s} <= 1 gives log(s) <= 0",))


def _check_prob(e):
    if not 0 < e < 1:
        raise InvalidOptions(f"failure probability e must lie in (0, 1), got {e}")


def theorem1_requirements(s, k, beta_sk, lambda_min, epsilon, e, consts=BoundConstants()) -> Requirements:
    """Sample size and accuracy cap for the constrained ML estimate under RLP.

    ``n >= c1 s log^2(s) log(2/e) / (beta^2 eps^4)`` and
    ``eps <= sqrt(c2 lambda_min log(s) / (beta max(c', sqrt(s))))``.
    """
    _check_prob(e)
    if s <= 1:
        return _degenerate_requirements(s)
    flags = ()
    if beta_sk <= 0:
        return Requirements(math.inf, math.inf, False, ("beta_sk <= 0: no finite sample size",))
    ls = math.log(s)
    n_min = consts.c1 * s * ls**2 * math.log(2 / e) / (beta_sk**2 * epsilon**4)
    eps_max = math.sqrt(consts.c2 * lambda_min * ls / (beta_sk * max(consts.c_prime, math.sqrt(s))))
    return Requirements(n_min, eps_max, False, flags)


def corollary1_requirements(s, k, gamma_k, lambda_min, epsilon, e, consts=BoundConstants()) -> Requirements:
    """RE-based version: ``n >= c1 s^3 log^2(s) log(2/e) / (gamma^2 eps^4)``.

    The accuracy cap is ``sqrt(c' lambda_min s log(s) / (max(c2, sqrt(s)) gamma))``.
    """
    _check_prob(e)
    if s <= 1:
        return _degenerate_requirements(s)
    if gamma_k <= 0:
        return Requirements(math.inf, math.inf, False, ("gamma_k <= 0: no finite sample size",))
    ls = math.log(s)
    n_min = consts.c1 * s**3 * ls**2 * math.log(2 / e) / (gamma_k**2 * epsilon**4)
    eps_max = math.sqrt(consts.c_prime * lambda_min * s * ls / (max(consts.c2, math.sqrt(s)) * gamma_k))
    return Requirements(n_min, eps_max)


def corollary2_error_bound(s, gamma_k, n, lambda_min, consts=BoundConstants()) -> ErrorBound:
    """High-probability l2 error bound ``C' s^{3/4} log^{1/2}(s) / (gamma^{1/2} n^{1/5})``.

    Valid for ``n >= (C0 s / lambda_min)^{5/2}`` with confidence
    ``1 - C1 exp(-C2 n^{1/5})``.
    """
    if s <= 1:
        return ErrorBound(_NAN, _NAN, _NAN, False, True, (f"degenerate scale: s={s} <= 1 gives log(s) <= 0",))
    if n < 1:
        raise InvalidOptions("n must be >= 1")
    n_floor = (consts.C0 * s / lambda_min) ** 2.5
    confidence = 1.0 - consts.C1 * math.exp(-consts.C2 * n**0.2)
    flags = []
    if gamma_k <= 0:
        bound = math.inf
        flags.append("gamma_k <= 0: unbounded error")
    else:
        bound = consts.C_prime * s**0.75 * math.sqrt(math.log(s)) / (math.sqrt(gamma_k) * n**0.2)
    below = n < n_floor
    if below:
        flags.append("n below the sample-size floor")
    return ErrorBound(bound, n_floor, confidence, bool(below), False, tuple(flags))


def theorem4_requirements(p, k, s, lambda_min, epsilon, e, consts=BoundConstants()) -> Requirements:
    """Random bounded-design requirements: the max of the RE branch and the accuracy branch.

    ``e`` is normally a failure probability in ``(0, 1)``.  Values up to 4
    keep the accuracy branch's ``log(4/e)`` positive and are evaluated with a
    flag, which is useful for hand checks.
    """
    if not 0 < e < 4:
        raise InvalidOptions(f"e must lie in (0, 4), got {e}")
    if p < 2 or k < 1:
        raise InvalidOptions("need p >= 2 and k >= 1")
    if s <= 1:
        return _degenerate_requirements(s)
    lp = math.log(p)
    ls = math.log(s)
    re_branch = consts.c1 * k**2 * lp * math.log(consts.c2 * k * lp) ** 3 * math.log(1 / e)
    acc_branch = consts.c_prime * k**2 * s**3 * ls**2 * math.log(4 / e) / epsilon**4
    eps_max = math.sqrt(consts.c4 * k**2 * lambda_min * s * ls / max(consts.c3, math.sqrt(s)))
    flags = ("re_branch",) if re_branch >= acc_branch else ("accuracy_branch",)
    if e >= 1:
        flags += ("e >= 1 is not a probability: the RE branch is non-positive",)
    return Requirements(max(re_branch, acc_branch), eps_max, False, flags)


def poisson_moment_constant(lambda_max: float) -> float:
    """Moment constant of the Bernstein condition for Poisson variables: ``max(1, sqrt(lambda_max))``."""
    return max(1.0, math.sqrt(lambda_max))


def bernstein_tail(lambda_rates, t: float) -> BernsteinBound:
    """Bernstein bound for independent Poisson counts with rates ``lambda_rates``.

    The deviation of the sample mean reaches ``(2t/n) sqrt(sum lambda)`` with
    probability at most ``2 exp(-t^2)``, for ``0 <= t <= sqrt(sum lambda) / (2L)``.
    """
    lam = np.asarray(lambda_rates, dtype=np.float64).ravel()
    if lam.size == 0 or np.any(lam <= 0):
        raise InvalidOptions("rates must be positive and non-empty")
    if t < 0:
        raise TOutOfRange(f"t must be nonnegative, got {t}")
    n = lam.size
    total = float(lam.sum())
    L = poisson_moment_constant(float(lam.max()))
    t_max = math.sqrt(total) / (2 * L)
    if t > t_max:
        raise TOutOfRange(f"t={t} exceeds the admissible maximum {t_max:.6g} = sqrt(sum lambda)/(2L)")
    return BernsteinBound(2 * t / n * math.sqrt(total), 2 * math.exp(-t * t), t_max, L)
