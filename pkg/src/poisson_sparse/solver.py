"""Projected-gradient minimization over the scaled nonnegative l1 ball / simplex."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation, DomainError
from .model import RATE_FLOOR, ParamVector, as_counts, as_vector, get_loss


class Mode(str, enum.Enum):
    SUM_AT_MOST = "le"
    SUM_EQUALS = "eq"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"sumatmost": "le", "sum_at_most": "le", "<=": "le",
                   "sumequals": "eq", "sum_equals": "eq", "=": "eq"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigurationError(f"unknown constraint mode {value!r}") from None


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    STATIONARY = "stationary"
    NO_PROGRESS = "no_progress"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class ConstraintSet:
    """``{w >= 0, sum(w) <= s}`` (mode ``le``) or ``{w >= 0, sum(w) = s}`` (``eq``)."""

    amplitude: float
    mode: Mode = Mode.SUM_AT_MOST
    rate_floor: float = RATE_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if not self.amplitude > 0:
            raise ConfigurationError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.rate_floor > 0:
            raise ConfigurationError("rate_floor must be > 0")

    def project(self, v):
        if self.mode is Mode.SUM_EQUALS:
            return project_simplex(v, self.amplitude)
        return project_nonneg_l1(v, self.amplitude)

    def is_feasible(self, w, tol=1e-9) -> bool:
        w = np.asarray(w, dtype=float)
        scale = max(1.0, self.amplitude)
        if np.any(w < -tol):
            return False
        total = w.sum()
        if self.mode is Mode.SUM_EQUALS:
            return abs(total - self.amplitude) <= tol * scale
        return total <= self.amplitude + tol * scale


@dataclass(frozen=True)
class SolverConfig:
    """Stopping and line-search parameters.

    Tolerances are relative: the run stops once the objective decrease is at
    most ``obj_tol * max(1, |f|)`` and the step is at most
    ``step_tol * max(1, ||w||)``.

    ``step_rule="bb"`` seeds each line search with a Barzilai-Borwein step;
    ``"grow"`` doubles the previously accepted step.
    """

    obj_tol: float = 1e-10
    step_tol: float = 1e-10
    max_iters: int = 50000
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    step_rule: str = "bb"
    record_history: bool = False

    def __post_init__(self):
        if not (self.obj_tol > 0 and self.step_tol > 0 and self.initial_step > 0):
            raise ConfigurationError("tolerances and initial_step must be positive")
        if int(self.max_iters) < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack_ratio < 1):
            raise ConfigurationError("armijo_c and backtrack_ratio must lie in (0, 1)")
        if self.step_rule not in ("bb", "grow"):
            raise ConfigurationError(f"unknown step_rule {self.step_rule!r}")


@dataclass(frozen=True)
class SolveResult:
    w_hat: ParamVector
    objective: float
    iterations: int
    converged: bool
    termination_reason: Termination
    history: list = field(default_factory=list, repr=False)


def project_simplex(v, s=1.0) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = s}`` (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if not s > 0:
        raise ConfigurationError("s must be > 0")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - s
    ind = np.arange(1, v.shape[0] + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def project_nonneg_l1(v, s=1.0) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) <= s}``."""
    v = np.asarray(v, dtype=float)
    if not s > 0:
        raise ConfigurationError("s must be > 0")
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= s:
        return clipped
    return project_simplex(v, s)


def threshold_support(w, t=0.0) -> np.ndarray:
    """Indices (0-based) with ``w_i > t``; ties at the threshold are dropped."""
    if t < 0:
        raise ConfigurationError("threshold must be >= 0")
    return np.flatnonzero(np.asarray(w, dtype=float) > t)


def minimize(loss, model, y, constraints, config=None, w0=None) -> SolveResult:
    """Minimize ``loss`` over the constraint set by projected gradient descent.

    Each iteration moves along the projection arc ``P(w - alpha * g)`` and
    backtracks until the Armijo condition holds and every rate stays above
    ``constraints.rate_floor``; the accepted objectives never increase.

    Parameters
    ----------
    loss : Loss or str
        ``"poisson"``, ``"rlasso"`` or ``"ls"`` (see :func:`model.get_loss`).
    model : AffineRateModel
    y : array-like of counts
    constraints : ConstraintSet
    config : SolverConfig, optional
    w0 : array-like, optional
        Feasible start; defaults to ``s / p`` in every coordinate.
    """
    loss = get_loss(loss)
    config = config or SolverConfig()
    A = model.matrix
    base = model.base_rates
    y = as_counts(y, model.n)
    s = constraints.amplitude
    floor = constraints.rate_floor
    project = constraints.project
    kernel = loss.kernel
    positive = loss.needs_positive_rates
    change = loss.change

    if w0 is None:
        w = np.full(model.p, s / model.p)
    else:
        w = as_vector(w0, model.p, "w0").copy()
        if not constraints.is_feasible(w):
            raise ContractViolation("starting point is not feasible for the constraint set")
        w = project(w)

    r = base + A @ w
    if positive:
        bad = np.flatnonzero(~(r > floor))
        if bad.size:
            raise DomainError(f"rate at row {bad[0]} is not above the floor at the start",
                              index=int(bad[0]))
    f, dr = kernel(r, y)
    if not np.isfinite(f):
        raise DomainError("objective is not finite at the starting point")
    g = A.T @ dr

    history = [float(f)] if config.record_history else []
    step = config.initial_step
    reason = Termination.MAX_ITERS
    it = 0
    eps = np.finfo(float).eps
    while it < config.max_iters:
        it += 1
        first_try = True
        while True:
            w_new = project(w - step * g)
            d = w_new - w
            if not np.any(d):
                # P(w - a g) = w for some a > 0 only at a stationary point
                reason = Termination.STATIONARY if first_try else Termination.NO_PROGRESS
                break
            slope = float(g @ d)
            Ad = A @ d
            r_new = r + Ad
            if not positive or np.all(r_new > floor):
                f_new, dr_new = kernel(r_new, y)
                if change is not None:
                    df, noise = change(r, Ad, y)
                else:
                    df, noise = f_new - f, max(1.0, abs(f))
                if df <= config.armijo_c * slope:
                    break
            else:
                noise = max(1.0, abs(f))
            if -slope <= 8 * eps * noise:
                # predicted decrease is below floating point resolution
                reason = Termination.NO_PROGRESS
                break
            step *= config.backtrack_ratio
            first_try = False
        if reason in (Termination.STATIONARY, Termination.NO_PROGRESS):
            break

        # resync with the exact rates so r + Ad round-off cannot accumulate
        r_new = base + A @ w_new
        f_new, dr_new = kernel(r_new, y)
        g_new = A.T @ dr_new
        decrease = -df
        step_norm = float(np.sqrt(d @ d))
        if config.step_rule == "bb":
            dg = g_new - g
            curv = float(d @ dg)
            step = float(d @ d) / curv if curv > 0 else 2.0 * step
            step = min(max(step, 1e-20), 1e20)
        elif first_try:
            step *= 2.0
        w, r, f, g = w_new, r_new, f_new, g_new
        if config.record_history:
            history.append(float(f))
        if (decrease <= config.obj_tol * max(1.0, abs(f))
                and step_norm <= config.step_tol * max(1.0, float(np.sqrt(w @ w)))):
            reason = Termination.CONVERGED
            break

    converged = reason is not Termination.MAX_ITERS
    return SolveResult(
        w_hat=ParamVector(np.maximum(w, 0.0)),
        objective=float(f),
        iterations=it,
        converged=converged,
        termination_reason=reason,
        history=history,
    )
