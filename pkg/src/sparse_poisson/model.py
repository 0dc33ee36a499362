"""Poisson observation model with affine rates.

Each sensor ``i`` reports a count ``y_i ~ Poisson(lambda0_i + a_i @ w)`` where
``A`` is a nonnegative ``n x p`` sensing matrix, ``lambda0`` the known
background rates and ``w`` a nonnegative (usually sparse) signal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NegativeWeight,
    NonFiniteEntry,
    NonIntegerCount,
    NonPositiveBackground,
    ParseError,
)

__all__ = [
    "PoissonLinearModel",
    "GroundTruth",
    "ModelRates",
    "ObservationSet",
    "build_model",
    "rates",
    "sample_observations",
    "ingest_csv",
    "random_sparse_truth",
    "uniform_design",
    "half_normal_design",
    "make_rng",
]


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; ``seed`` may be an int, a tuple of ints or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence([int(x) for x in seed]))
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class PoissonLinearModel:
    A: np.ndarray
    lambda0: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @property
    def a_max(self) -> float:
        return float(self.A.max()) if self.A.size else 0.0

    @property
    def lambda0_max(self) -> float:
        return float(self.lambda0.max()) if self.lambda0.size else 0.0

    def lambda_max_bound(self, s: float) -> float:
        """Worst-case rate ``max_i lambda0_i + s * a_max`` over signals with ``||w||_1 <= s``."""
        return self.lambda0_max + s * self.a_max

    def subset(self, rows) -> "PoissonLinearModel":
        rows = np.asarray(rows)
        return PoissonLinearModel(_frozen(self.A[rows]), _frozen(self.lambda0[rows]))

    def head(self, n: int) -> "PoissonLinearModel":
        return PoissonLinearModel(_frozen(self.A[:n]), _frozen(self.lambda0[:n]))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "a_max": self.a_max,
            "lambda0_min": float(self.lambda0.min()) if self.lambda0.size else None,
            "lambda0_max": self.lambda0_max,
        }


@dataclass(frozen=True)
class GroundTruth:
    """True signal; ``k`` and ``s`` are always recomputed from ``w_star``."""

    w_star: np.ndarray
    k: int = field(init=False)
    s: float = field(init=False)

    def __post_init__(self):
        w = _frozen(np.ravel(self.w_star))
        if not np.all(np.isfinite(w)):
            raise NonFiniteEntry("ground truth contains non-finite entries")
        if np.any(w < 0):
            raise NegativeWeight("ground truth must be nonnegative")
        object.__setattr__(self, "w_star", w)
        object.__setattr__(self, "k", int(np.count_nonzero(w > 0)))
        object.__setattr__(self, "s", float(w.sum()))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.w_star > 0)


@dataclass(frozen=True)
class ModelRates:
    lambda_w: np.ndarray

    @property
    def lambda_min(self) -> float:
        return float(self.lambda_w.min())

    @property
    def lambda_max(self) -> float:
        return float(self.lambda_w.max())


@dataclass(frozen=True)
class ObservationSet:
    y: np.ndarray
    seed: object = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1:
            y = np.ravel(y)
        if y.dtype.kind == "f":
            if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
                raise NonIntegerCount("counts must be integers")
        elif y.dtype.kind not in "iu":
            raise NonIntegerCount(f"counts must be integers, got dtype {y.dtype}")
        y = y.astype(np.int64)
        if np.any(y < 0):
            raise NonIntegerCount("counts must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def subset(self, rows) -> "ObservationSet":
        return ObservationSet(self.y[np.asarray(rows)], self.seed)


def build_model(A, lambda0) -> PoissonLinearModel:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"A must be 2-D, got shape {A.shape}")
    n, p = A.shape
    if n < 1 or p < 1:
        raise DimensionMismatch(f"A must have at least one row and column, got {A.shape}")
    lambda0 = np.asarray(lambda0, dtype=np.float64)
    if lambda0.ndim == 0:
        lambda0 = np.full(n, float(lambda0))
    lambda0 = np.ravel(lambda0)
    if lambda0.shape[0] != n:
        raise DimensionMismatch(f"lambda0 has {lambda0.shape[0]} entries, A has {n} rows")
    if not np.all(np.isfinite(A)):
        raise NonFiniteEntry("A contains non-finite entries")
    if np.any(A < 0):
        raise NegativeEntry("A contains negative entries")
    if not np.all(np.isfinite(lambda0)):
        raise NonFiniteEntry("lambda0 contains non-finite entries")
    if np.any(lambda0 <= 0):
        raise NonPositiveBackground("every background rate lambda0_i must be > 0")
    return PoissonLinearModel(_frozen(A), _frozen(lambda0))


def _check_weight(model: PoissonLinearModel, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != model.p:
        raise DimensionMismatch(f"w has length {w.shape[0]}, model has p={model.p}")
    if np.any(w < 0):
        raise NegativeWeight("w must be nonnegative")
    return w


def rates(model: PoissonLinearModel, w) -> ModelRates:
    w = _check_weight(model, w)
    return ModelRates(model.lambda0 + model.A @ w)


def sample_observations(model: PoissonLinearModel, truth: GroundTruth, seed) -> ObservationSet:
    lam = rates(model, truth.w_star).lambda_w
    rng = make_rng(seed)
    y = rng.poisson(lam).astype(np.int64)
    return ObservationSet(y, seed if not isinstance(seed, np.random.Generator) else None)


def random_sparse_truth(p: int, k: int, s: float, rng) -> GroundTruth:
    """Uniformly random size-``k`` support, magnitudes i.i.d. U(0,1) rescaled to sum ``s``."""
    rng = make_rng(rng)
    w = np.zeros(p)
    idx = rng.choice(p, size=k, replace=False)
    mag = rng.uniform(0.0, 1.0, size=k)
    # U(0,1) can return exactly 0; keep the support size exact.
    mag = np.where(mag > 0, mag, np.finfo(float).tiny)
    w[idx] = mag * (s / mag.sum())
    return GroundTruth(w)


def uniform_design(n: int, p: int, rng, scale: float = 1.0) -> np.ndarray:
    return make_rng(rng).uniform(0.0, scale, size=(n, p))


def half_normal_design(n: int, p: int, rng, scale: float = 1.0) -> np.ndarray:
    """Standard normal truncated to ``[0, inf)``, times ``scale``."""
    return scale * np.abs(make_rng(rng).standard_normal(size=(n, p)))


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_numeric_csv(path) -> list[list[float]]:
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    rows = []
    width = None
    with path.open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", path, r, c) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(
                    f"ragged row: expected {width} fields, found {len(vals)}", path, r
                )
            rows.append(vals)
    if not rows:
        raise ParseError("file is empty", path=path)
    return rows


def _as_vector(rows, path) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[0] == 1 or arr.shape[1] == 1:
        return arr.ravel()
    raise ParseError(f"expected a single row or column, got shape {arr.shape}", path=path)


def read_matrix_csv(path) -> np.ndarray:
    return np.asarray(_read_numeric_csv(path), dtype=np.float64)


def read_vector_csv(path) -> np.ndarray:
    """A single row or column of numbers."""
    return _as_vector(_read_numeric_csv(path), path)


def ingest_csv(path_A, path_y, path_lambda0) -> tuple[PoissonLinearModel, ObservationSet]:
    """Load a headerless, comma-separated dataset.

    ``A`` is row-major ``n x p``; ``y`` and ``lambda0`` are a single row or
    column of ``n`` values (``lambda0`` may also be one value shared by all
    sensors).  ``path_lambda0`` may also be a number instead of a path.
    """
    A = read_matrix_csv(path_A)
    y = read_vector_csv(path_y)
    if isinstance(path_lambda0, (int, float)):
        lam = np.array([float(path_lambda0)])
    else:
        lam = read_vector_csv(path_lambda0)
    if y.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"{path_y}: {y.shape[0]} counts for {A.shape[0]} rows of A")
    if lam.shape[0] == 1:
        lam = np.full(A.shape[0], lam[0])
    bad = np.flatnonzero(~np.isfinite(y) | (y != np.round(y)) | (y < 0))
    if bad.size:
        raise NonIntegerCount(f"{path_y}: entry {bad[0] + 1} ({y[bad[0]]!r}) is not a nonnegative integer")
    model = build_model(A, lam)
    return model, ObservationSet(y.astype(np.int64))
