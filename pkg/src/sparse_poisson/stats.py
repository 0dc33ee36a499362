"""Small statistics helpers used to summarize experiment curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class TrendTest:
    S: int
    z: float
    p_value: float
    direction: str


def mann_kendall(x, direction: str = "decreasing") -> TrendTest:
    """One-sided Mann-Kendall trend test on a sequence ordered by time/index.

    ``direction`` is ``"decreasing"`` or ``"increasing"``; the p-value is for
    that alternative.  Uses the tie-corrected variance and continuity
    correction.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    S = 0
    for i in range(n - 1):
        S += int(np.sum(np.sign(x[i + 1 :] - x[i])))
    _, counts = np.unique(x, return_counts=True)
    var = (n * (n - 1) * (2 * n + 5) - np.sum(counts * (counts - 1) * (2 * counts + 5))) / 18.0
    if var <= 0:
        return TrendTest(S, 0.0, 1.0, direction)
    if S > 0:
        z = (S - 1) / math.sqrt(var)
    elif S < 0:
        z = (S + 1) / math.sqrt(var)
    else:
        z = 0.0
    if direction == "decreasing":
        p = float(_st.norm.cdf(z))
    elif direction == "increasing":
        p = float(_st.norm.sf(z))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return TrendTest(int(S), float(z), p, direction)


def linear_fit(x, y) -> dict:
    res = _st.linregress(np.asarray(x, float), np.asarray(y, float))
    return {
        "slope": float(res.slope),
        "intercept": float(res.intercept),
        "r_squared": float(res.rvalue**2),
        "p_value": float(res.pvalue),
        "points": int(len(x)),
    }


def mean_stderr(values) -> tuple[float, float | None]:
    """Sample mean and standard error; the error is ``None`` for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), None
    if v.size == 1:
        return float(v[0]), None
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def spearman(x, y) -> float:
    return float(_st.spearmanr(x, y).statistic)
