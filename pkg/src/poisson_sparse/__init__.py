"""Sparse nonnegative signal recovery from Poisson counts with affine rates.

Main entry points:

* :class:`AffineRateModel`, the losses in :mod:`poisson_sparse.model`;
* :func:`minimize` and the projections in :mod:`poisson_sparse.solver`;
* the estimators :class:`PoissonMLRegressor`, :class:`RescaledLassoRegressor`
  and :class:`GaussianMLRegressor`;
* random designs and the restricted eigenvalue estimate in :mod:`poisson_sparse.sensing`;
* error bounds in :mod:`poisson_sparse.bounds`, metrics in :mod:`poisson_sparse.metrics`;
* the experiment harness in :mod:`poisson_sparse.experiments`.
"""

__version__ = "0.1.0"

from .estimators import GaussianMLRegressor, PoissonMLRegressor, RescaledLassoRegressor
from .exceptions import (
    BoundConditionWarning,
    ConfigurationError,
    ConstructionError,
    ContractViolation,
    DomainError,
    InfeasibleRegimeError,
    PoissonSparseError,
)
from .model import (
    AffineRateModel,
    ObservationSet,
    ParamVector,
    RateSummary,
    least_squares_loss,
    poisson_nll,
    rate_summary,
    rates,
    rescaled_lasso_loss,
)
from .solver import (
    ConstraintSet,
    Mode,
    SolveResult,
    SolverConfig,
    minimize,
    project_nonneg_l1,
    project_simplex,
    threshold_support,
)

__all__ = [
    "AffineRateModel", "ObservationSet", "ParamVector", "RateSummary", "rate_summary", "rates",
    "poisson_nll", "rescaled_lasso_loss", "least_squares_loss",
    "ConstraintSet", "Mode", "SolverConfig", "SolveResult", "minimize",
    "project_nonneg_l1", "project_simplex", "threshold_support",
    "PoissonMLRegressor", "RescaledLassoRegressor", "GaussianMLRegressor",
    "PoissonSparseError", "ContractViolation", "ConfigurationError", "DomainError",
    "ConstructionError", "InfeasibleRegimeError", "BoundConditionWarning",
]
