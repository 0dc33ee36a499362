"""Sparse nonnegative recovery from Poisson counts.

The main entry points are :func:`build_model`, :func:`solve_ml` and
:func:`solve_rescaled_lasso`; the ``conditions`` and ``bounds`` modules
evaluate the recovery guarantees and ``experiments`` runs seeded Monte Carlo
studies.
"""

from .errors import *  # noqa: F401,F403
from .likelihood import (
    ModelComparisonReport,
    discretized_gaussian_logpmf,
    heldout_loglik_lasso,
    heldout_loglik_ml,
    log_bayes_factor,
    q_value_grad,
    qbar_value,
    rescaled_lasso_value_grad,
)
from .model import (
    GroundTruth,
    ObservationSet,
    PoissonLinearModel,
    build_model,
    ingest_csv,
    random_sparse_truth,
    rates,
    sample_observations,
)
from .solver import (
    FeasibilityBudget,
    SolveResult,
    SolverOptions,
    keep_largest,
    project_theta_s,
    solve_ml,
    solve_rescaled_lasso,
    threshold_support,
)

__version__ = "0.1.0"
