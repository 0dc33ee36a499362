"""Independent brute-force oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import itertools

import numpy as np


def projection_by_enumeration(v, s):
    """Exact projection onto {w >= 0, sum w <= s} by trying every support set.

    On a support S the KKT point is either the clipped vector (budget slack)
    or v_S - theta with theta = (sum v_S - s)/|S| (budget tight).  The
    feasible candidate closest to v is the projection.
    """
    v = np.asarray(v, dtype=float)
    p = v.size
    best, best_d = np.zeros(p), float(np.sum(v**2))
    for r in range(1, p + 1):
        for S in itertools.combinations(range(p), r):
            S = list(S)
            for tight in (False, True):
                w = np.zeros(p)
                if tight:
                    theta = (v[S].sum() - s) / len(S)
                    w[S] = v[S] - theta
                else:
                    w[S] = v[S]
                if np.any(w < -1e-15) or w.sum() > s + 1e-12:
                    continue
                w = np.maximum(w, 0)
                d = float(np.sum((w - v) ** 2))
                if d < best_d:
                    best, best_d = w, d
    return best


def simplex_grid(p, s, h):
    """All points of the lattice h * Z^p inside {w >= 0, sum w <= s}, one row each."""
    m = int(np.floor(s / h + 1e-9))
    axis = np.arange(m + 1)
    if p == 1:
        return (axis * h)[:, None]
    pts = []
    for head in itertools.product(axis, repeat=p - 1):
        rest = m - sum(head)
        if rest < 0:
            continue
        tail = np.arange(rest + 1)
        block = np.empty((tail.size, p))
        block[:, : p - 1] = head
        block[:, p - 1] = tail
        pts.append(block)
    return np.vstack(pts) * h


def _grid_rows(p, s, h, chunk):
    """Lattice points streamed in chunks (fixing the first coordinate per chunk)."""
    m = int(np.floor(s / h + 1e-9))
    if p <= 2:
        yield simplex_grid(p, s, h)
        return
    buf = []
    size = 0
    for i in range(m + 1):
        sub = simplex_grid(p - 1, (m - i) * h + 1e-12, h)
        block = np.hstack([np.full((sub.shape[0], 1), i * h), sub])
        buf.append(block)
        size += block.shape[0]
        if size >= chunk:
            yield np.vstack(buf)
            buf, size = [], 0
    if buf:
        yield np.vstack(buf)


def grid_min(objective_rows, p, s, h=1e-3, chunk=200_000):
    """Minimum of a vectorized objective over the lattice inside Theta_s."""
    best = np.inf
    arg = None
    for W in _grid_rows(p, s, h, chunk):
        vals = objective_rows(W)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), W[i].copy()
    return best, arg


def q_rows(A, lam0, y):
    n = A.shape[0]

    def f(W):
        AW = W @ A.T  # rows x n
        return -(np.log(lam0[None, :] + AW) @ y - AW.sum(axis=1)) / n

    return f


def lasso_rows(A, lam0, y):
    n = A.shape[0]

    def f(W):
        mu = lam0[None, :] + W @ A.T
        return np.sum((y[None, :] - mu) ** 2 / mu, axis=1) / n

    return f
