"""Affine-rate Poisson observation model and its loss functions.

Observations follow ``y_i ~ Poisson(lambda0_i + a_i^T w)``. Three losses are
provided, each returning ``(value, gradient)``:

* :func:`poisson_nll` -- mean Poisson negative log-likelihood (constants dropped),
* :func:`rescaled_lasso_loss` -- squared residuals divided by the model rate,
* :func:`least_squares_loss` -- plain mean squared residual (Gaussian ML).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractViolation, DomainError

RATE_FLOOR = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AffineRateModel:
    """Base rates ``lambda0`` (length n) and sensing matrix ``A`` (n x p)."""

    base_rates: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        base = _frozen(np.atleast_1d(self.base_rates))
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim == 1:
            mat = mat.reshape(1, -1)
        mat.setflags(write=False)
        if base.ndim != 1 or mat.ndim != 2:
            raise ContractViolation("base_rates must be a vector and matrix 2-D")
        if base.shape[0] != mat.shape[0]:
            raise ContractViolation(
                f"base_rates has length {base.shape[0]} but matrix has {mat.shape[0]} rows"
            )
        if not np.all(np.isfinite(base)) or np.any(base < 0):
            raise ContractViolation("base_rates must be finite and nonnegative")
        if not np.all(np.isfinite(mat)):
            raise ContractViolation("matrix must be finite-valued")
        object.__setattr__(self, "base_rates", base)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def constant(cls, lambda0, matrix):
        """Model whose base rate is the same scalar for every row."""
        matrix = np.asarray(matrix, dtype=float)
        return cls(np.full(matrix.shape[0], float(lambda0)), matrix)

    def subset(self, rows) -> "AffineRateModel":
        """Model restricted to the given row indices (or slice)."""
        return AffineRateModel(self.base_rates[rows], self.matrix[rows])

    def to_dict(self) -> dict:
        return {"base_rates": self.base_rates.tolist(), "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "AffineRateModel":
        try:
            return cls(doc["base_rates"], doc["matrix"])
        except KeyError as exc:
            raise ContractViolation(f"model document is missing key {exc}") from None

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "AffineRateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Nonnegative parameter vector ``w``."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(np.atleast_1d(self.values))
        if v.ndim != 1:
            raise ContractViolation("parameter vector must be 1-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ContractViolation("parameter vector entries must be finite and >= 0")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.shape[0]

    @property
    def l1(self) -> float:
        return float(self.values.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    @property
    def k(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Poisson counts ``y``, one per model row."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.counts))
        if c.ndim != 1:
            raise ContractViolation("counts must be 1-D")
        if c.size and (np.any(c < 0) or np.any(c != np.round(c))):
            raise ContractViolation("counts must be nonnegative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __array__(self, dtype=None, copy=None):
        return self.counts if dtype is None else self.counts.astype(dtype)

    def __len__(self):
        return self.counts.shape[0]


@dataclass(frozen=True)
class RateSummary:
    lambda_min: float
    lambda_max: float
    lambda_harmonic: float
    a_max: float
    a_min: float
    rates: np.ndarray = field(repr=False, compare=False)


def as_vector(w, p=None, name="w") -> np.ndarray:
    v = np.asarray(w, dtype=float)
    if v.ndim != 1:
        raise ContractViolation(f"{name} must be a vector")
    if p is not None and v.shape[0] != p:
        raise ContractViolation(f"{name} has dimension {v.shape[0]}, expected {p}")
    return v


def as_counts(y, n=None) -> np.ndarray:
    c = np.asarray(y, dtype=float)
    if c.ndim != 1:
        raise ContractViolation("observations must be a vector")
    if n is not None and c.shape[0] != n:
        raise ContractViolation(f"{c.shape[0]} observations for a model with {n} rows")
    return c


def rates(model: AffineRateModel, w) -> np.ndarray:
    """Per-row Poisson rates ``lambda0 + A @ w``."""
    w = as_vector(w, model.p)
    return model.base_rates + model.matrix @ w


def check_rates(r, floor=RATE_FLOOR) -> None:
    bad = np.flatnonzero(~(r > floor))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"rate {r[i]!r} at row {i} is not above {floor:g}", index=i)


# Loss kernels work on raw arrays: they take the current rates and return the
# loss value and d(loss)/d(rate) per row. The chain rule through A is shared.


def _poisson_kernel(r, y):
    n = r.shape[0]
    value = (r.sum() - np.dot(y, np.log(r))) / n
    return value, (1.0 - y / r) / n


def _poisson_change(r, dr, y):
    """``Q(r + dr) - Q(r)`` without cancellation, and the scale of its rounding error."""
    n = r.shape[0]
    t = y * np.log1p(dr / r)
    return (dr.sum() - t.sum()) / n, (np.abs(dr).sum() + np.abs(t).sum()) / n


def _rlasso_kernel(r, y):
    n = r.shape[0]
    resid = y - r
    value = np.dot(resid, resid / r) / n
    return value, (1.0 - (y / r) ** 2) / n


def _rlasso_change(r, dr, y):
    n = r.shape[0]
    e = y - r
    terms = dr * (r * (dr - 2.0 * e) - e * e) / (r * (r + dr))
    return terms.sum() / n, np.abs(terms).sum() / n + np.dot(e, e / r) / n


def _ls_kernel(r, y):
    n = r.shape[0]
    resid = r - y
    return np.dot(resid, resid) / n, 2.0 * resid / n


def _ls_change(r, dr, y):
    n = r.shape[0]
    terms = dr * (dr + 2.0 * (r - y))
    return terms.sum() / n, np.abs(terms).sum() / n + np.dot(r - y, r - y) / n


@dataclass(frozen=True)
class Loss:
    """A loss expressed through the per-row rates."""

    name: str
    kernel: object
    needs_positive_rates: bool
    change: object = None  # (r, dr, y) -> (Q(r + dr) - Q(r), rounding scale)

    def __call__(self, model, y, w):
        r = rates(model, w)
        y = as_counts(y, model.n)
        if self.needs_positive_rates:
            check_rates(r)
        value, dr = self.kernel(r, y)
        return float(value), model.matrix.T @ dr


POISSON = Loss("poisson", _poisson_kernel, True, _poisson_change)
RESCALED_LASSO = Loss("rlasso", _rlasso_kernel, True, _rlasso_change)
LEAST_SQUARES = Loss("ls", _ls_kernel, False, _ls_change)

LOSSES = {loss.name: loss for loss in (POISSON, RESCALED_LASSO, LEAST_SQUARES)}
_ALIASES = {
    "poisson_nll": "poisson",
    "poissonml": "poisson",
    "rescaled_lasso": "rlasso",
    "rescaledlasso": "rlasso",
    "least_squares": "ls",
    "gaussianml": "ls",
}


def get_loss(loss) -> Loss:
    """Resolve a :class:`Loss` from an instance or a (case-insensitive) name."""
    if isinstance(loss, Loss):
        return loss
    key = str(loss).lower()
    key = _ALIASES.get(key, key)
    try:
        return LOSSES[key]
    except KeyError:
        raise ContractViolation(f"unknown loss {loss!r}; choose from {sorted(LOSSES)}") from None


def poisson_nll(model, y, w):
    """Mean Poisson negative log-likelihood and its gradient.

    ``Q(w) = (1/n) sum_i [lambda_i(w) - y_i log lambda_i(w)]``; the gradient is
    ``(1/n) sum_i (1 - y_i / lambda_i(w)) a_i``.

    Raises
    ------
    DomainError
        If any rate is at or below the floor ``1e-12``; ``.index`` names the row.
    """
    return POISSON(model, y, w)


def rescaled_lasso_loss(model, y, w):
    """Mean of ``(y_i - lambda_i)^2 / lambda_i`` and its gradient."""
    return RESCALED_LASSO(model, y, w)


def least_squares_loss(model, y, w):
    """Mean of ``(y_i - lambda_i)^2``; rates may take any sign."""
    return LEAST_SQUARES(model, y, w)


def rate_summary(model: AffineRateModel, w_star) -> RateSummary:
    """Rate statistics at the ground truth used by the error bounds.

    ``lambda_max`` follows the bound's definition ``max_i lambda0_i + a_max * s``
    with ``s = ||w_star||_1``, not the largest realised rate.
    """
    w = as_vector(w_star, model.p, "w_star")
    r = rates(model, w)
    check_rates(r)
    a_max = float(model.matrix.max())
    s = float(np.abs(w).sum())
    return RateSummary(
        lambda_min=float(r.min()),
        lambda_max=float(model.base_rates.max() + a_max * s),
        lambda_harmonic=harmonic_mean(r),
        a_max=a_max,
        a_min=float(model.matrix.min()),
        rates=_frozen(r),
    )


def harmonic_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.shape[0] / np.sum(1.0 / values))


def load_matrix_csv(path) -> np.ndarray:
    """Read a matrix stored one row per line, comma separated."""
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)


def save_matrix_csv(path, matrix) -> None:
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")


def load_vector_csv(path) -> np.ndarray:
    """Read a vector written either one value per line or as a single row."""
    return np.loadtxt(path, delimiter=",", ndmin=1, dtype=float).ravel()


def save_vector_csv(path, values) -> None:
    np.savetxt(path, np.ravel(values), delimiter=",", fmt="%.17g")
