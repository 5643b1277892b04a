"""Estimator classes wrapping :func:`solver.minimize` behind fit/predict."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ContractViolation
from .model import AffineRateModel
from .solver import ConstraintSet, SolverConfig, minimize, threshold_support


def _base_rates(value, n):
    b = np.asarray(value, dtype=float)
    if b.ndim == 0:
        return np.full(n, float(b))
    if b.shape != (n,):
        raise ContractViolation(f"base_rates has shape {b.shape}, expected ({n},)")
    return b


class _ConstrainedRateRegressor(RegressorMixin, BaseEstimator):
    """Shared fit/predict logic; subclasses fix ``_loss``."""

    _loss = "poisson"

    def __init__(self, amplitude=1.0, mode="le", base_rates=1.0, obj_tol=1e-10,
                 step_tol=1e-10, max_iters=50000, step_rule="bb"):
        self.amplitude = amplitude
        self.mode = mode
        self.base_rates = base_rates
        self.obj_tol = obj_tol
        self.step_tol = step_tol
        self.max_iters = max_iters
        self.step_rule = step_rule

    def _solver_config(self):
        return SolverConfig(obj_tol=self.obj_tol, step_tol=self.step_tol,
                            max_iters=self.max_iters, step_rule=self.step_rule)

    def _model(self, X, base_rates):
        b = self.base_rates if base_rates is None else base_rates
        return AffineRateModel(_base_rates(b, X.shape[0]), X)

    def _initial_point(self, model, y, constraints):
        return None

    def fit(self, X, y, base_rates=None):
        """Fit the nonnegative coefficient vector.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Sensing matrix ``A``.
        y : array-like of shape (n_samples,)
            Observed counts.
        base_rates : float or array-like of shape (n_samples,), optional
            Background rates ``lambda0``; overrides the constructor value.

        Returns
        -------
        self
        """
        X, y = check_X_y(X, y, dtype=float)
        model = self._model(X, base_rates)
        constraints = ConstraintSet(self.amplitude, self.mode)
        w0 = self._initial_point(model, y, constraints)
        res = minimize(self._loss, model, y, constraints, self._solver_config(), w0=w0)
        self.coef_ = res.w_hat.values.copy()
        self.objective_ = res.objective
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.termination_reason_ = res.termination_reason.value
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, base_rates=None):
        """Predicted rates ``lambda0 + X @ coef_``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ContractViolation(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._model(X, base_rates).base_rates + X @ self.coef_

    def support(self, threshold=0.0):
        """Indices of coefficients strictly above ``threshold``."""
        check_is_fitted(self, "coef_")
        return threshold_support(self.coef_, threshold)


class PoissonMLRegressor(_ConstrainedRateRegressor):
    """l1-constrained Poisson maximum-likelihood decoder.

    Minimizes the mean Poisson negative log-likelihood over
    ``{w >= 0, sum(w) <= amplitude}`` (``mode="le"``) or the scaled simplex
    (``mode="eq"``).

    Examples
    --------
    >>> import numpy as np
    >>> est = PoissonMLRegressor(amplitude=10.0).fit(np.ones((1, 1)), [3])
    >>> round(float(est.coef_[0]), 6)
    2.0
    """

    _loss = "poisson"


class GaussianMLRegressor(_ConstrainedRateRegressor):
    """Constrained least squares on the same feasible set."""

    _loss = "ls"


class RescaledLassoRegressor(_ConstrainedRateRegressor):
    """Rate-weighted least squares ``mean((y - lambda)^2 / lambda)``.

    The objective is not convex in general. With ``warm_start_ls=True`` the
    descent starts from the least-squares solution, when that point keeps every
    rate positive.
    """

    _loss = "rlasso"

    def __init__(self, amplitude=1.0, mode="le", base_rates=1.0, obj_tol=1e-10,
                 step_tol=1e-10, max_iters=50000, step_rule="bb", warm_start_ls=False):
        super().__init__(amplitude=amplitude, mode=mode, base_rates=base_rates, obj_tol=obj_tol,
                         step_tol=step_tol, max_iters=max_iters, step_rule=step_rule)
        self.warm_start_ls = warm_start_ls

    def _initial_point(self, model, y, constraints):
        if not self.warm_start_ls:
            return None
        res = minimize("ls", model, y, constraints, self._solver_config())
        w = res.w_hat.values
        if np.all(model.base_rates + model.matrix @ w > constraints.rate_floor):
            return w
        return None


ESTIMATORS = {
    "PoissonML": PoissonMLRegressor,
    "RescaledLASSO": RescaledLassoRegressor,
    "GaussianML": GaussianMLRegressor,
}
