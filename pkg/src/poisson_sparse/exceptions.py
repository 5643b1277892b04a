"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so keep the classes narrow.
"""


class PoissonSparseError(Exception):
    """Base class for all package errors."""


class ContractViolation(PoissonSparseError, ValueError):
    """Inputs break a structural precondition (shape, sign, feasibility)."""


class ConfigurationError(PoissonSparseError, ValueError):
    """Invalid parameters for a generator, estimator or experiment."""


class DomainError(PoissonSparseError, ValueError):
    """A function was evaluated outside its domain, e.g. a non-positive rate.

    Parameters
    ----------
    message : str
    index : int, optional
        Position of the first offending entry, when there is one.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConstructionError(PoissonSparseError, RuntimeError):
    """A randomized construction ran out of budget (retry with another seed)."""


class InfeasibleRegimeError(PoissonSparseError, ValueError):
    """Parameters fall outside the regime where a bound is proved."""


class BoundConditionWarning(UserWarning):
    """A side condition of a bound is violated; the value is still returned."""
