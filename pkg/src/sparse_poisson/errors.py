"""Exception hierarchy shared by all modules."""


class SparsePoissonError(ValueError):
    """Base class for every error raised by this package."""


class DimensionMismatch(SparsePoissonError):
    pass


class NonFiniteEntry(SparsePoissonError):
    pass


class NegativeEntry(NonFiniteEntry):
    """A sensing-matrix entry is negative (only nonnegative designs are supported)."""


class NonPositiveBackground(SparsePoissonError):
    pass


class NegativeWeight(SparsePoissonError):
    pass


class ParseError(SparsePoissonError):
    def __init__(self, message, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.row = row
        self.column = column


class NonIntegerCount(SparsePoissonError):
    pass


class NonPositiveRate(SparsePoissonError):
    pass


class InvalidSigma(SparsePoissonError):
    pass


class InvalidOptions(SparsePoissonError):
    pass


class MaxItersExceeded(SparsePoissonError):
    """Raised only when a caller asks for strict convergence; carries the best iterate."""

    def __init__(self, result):
        super().__init__(
            f"solver stopped after {result.iterations} iterations without converging"
        )
        self.result = result


class InvalidSparsity(SparsePoissonError):
    pass


class InfeasiblePerturbation(SparsePoissonError):
    pass


class NoFeasibleDirection(SparsePoissonError):
    pass


class TOutOfRange(SparsePoissonError):
    pass


class EmptyTruthSupport(SparsePoissonError):
    pass


class ConfigError(SparsePoissonError):
    pass
