"""Recovery metrics, ROC curves and likelihood-based model comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr

from .exceptions import ConfigurationError, ContractViolation, DomainError
from .model import AffineRateModel, as_counts, as_vector, rates


@dataclass(frozen=True)
class RecoveryMetrics:
    l2_error: float
    support_success: bool
    detections: int
    false_alarms: int


@dataclass(frozen=True)
class ROCPoint:
    threshold: float
    pd: float
    pf: float


def _pair(w_hat, w_star):
    a = np.asarray(w_hat, dtype=float).ravel()
    b = np.asarray(w_star, dtype=float).ravel()
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def l2_error(w_hat, w_star) -> float:
    a, b = _pair(w_hat, w_star)
    return float(np.linalg.norm(a - b))


def support_metrics(w_hat, w_star, t=0.0) -> RecoveryMetrics:
    """Compare the support of ``w_hat`` thresholded at ``t`` (strictly) with that of ``w_star``."""
    if t < 0:
        raise ConfigurationError("threshold must be >= 0")
    a, b = _pair(w_hat, w_star)
    est = a > t
    true = b != 0
    return RecoveryMetrics(
        l2_error=float(np.linalg.norm(a - b)),
        support_success=bool(np.array_equal(est, true)),
        detections=int(np.count_nonzero(est & true)),
        false_alarms=int(np.count_nonzero(est & ~true)),
    )


def roc_curve(w_hats, w_stars, thresholds) -> list:
    """Average detection and false-alarm rates per threshold.

    ``pd`` is the mean of ``detections / k`` and ``pf`` the mean of
    ``false_alarms / (p - k)`` over the paired estimates.
    """
    if len(w_hats) == 0 or len(w_hats) != len(w_stars):
        raise ContractViolation("need equally many (nonzero) estimates and ground truths")
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ContractViolation("thresholds must be non-empty")
    if any(t2 > t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ContractViolation("thresholds must be sorted in descending order")
    H = np.stack([_pair(h, s)[0] for h, s in zip(w_hats, w_stars)])
    S = np.stack([np.asarray(s, dtype=float).ravel() for s in w_stars]) != 0
    k = S.sum(axis=1)
    neg = S.shape[1] - k
    out = []
    for t in thresholds:
        est = H > t
        det = (est & S).sum(axis=1) / np.maximum(k, 1)
        fa = (est & ~S).sum(axis=1) / np.maximum(neg, 1)
        out.append(ROCPoint(t, float(det.mean()), float(fa.mean())))
    return out


def roc_auc(points) -> float:
    """Trapezoidal area under ``pd`` vs ``pf``, anchored at (0, 0) and (1, 1)."""
    pf = np.array([0.0] + [pt.pf for pt in points] + [1.0])
    pd = np.array([0.0] + [pt.pd for pt in points] + [1.0])
    order = np.lexsort((pd, pf))
    x, y = pf[order], pd[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def _log_q_diff(lo, hi):
    """``log(Q(lo) - Q(hi))`` for ``lo < hi``, stable in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    # upper tail: Q(lo) - Q(hi) = Phi(-lo) - Phi(-hi); lower tail: Phi(hi) - Phi(lo)
    right = lo > 0
    a = np.where(right, -hi, lo)
    b = np.where(right, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return out


def log_discretized_gaussian_pmf(y, mu, sigma, printed_normalizer=False):
    """Log of :func:`discretized_gaussian_pmf`; vectorizes over its arguments."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be positive")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DomainError("y must be a nonnegative integer")
    log_mass = _log_q_diff((y - mu) / sigma, (y + 1 - mu) / sigma)
    # Q(-mu/sigma) = Phi(mu/sigma); the printed variant uses Q(mu/sigma) = Phi(-mu/sigma)
    log_z = log_ndtr(-mu / sigma) if printed_normalizer else log_ndtr(mu / sigma)
    out = log_mass - log_z
    return float(out) if out.ndim == 0 else out


def discretized_gaussian_pmf(y, mu, sigma, printed_normalizer=False):
    """Integer-bin mass of a normal density restricted to ``y >= 0``.

    ``(Q((y - mu)/sigma) - Q((y + 1 - mu)/sigma)) / Z`` with ``Q`` the standard
    normal tail. ``Z = Q(-mu/sigma)`` makes the masses over ``y >= 0`` sum to
    one; ``printed_normalizer=True`` uses ``Z = Q(mu/sigma)`` instead, which
    sums to one only when ``mu = 0``.
    """
    out = np.exp(log_discretized_gaussian_pmf(y, mu, sigma, printed_normalizer))
    return float(out) if np.ndim(out) == 0 else out


def poisson_logpmf(y, lam):
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return -lam + y * np.log(lam) - gammaln(y + 1.0)


def _positive_rates(model, w, name):
    r = rates(model, as_vector(w, model.p, name))
    bad = np.flatnonzero(~(r > 0))
    if bad.size:
        raise DomainError(f"rate {r[bad[0]]} at row {bad[0]} is not positive", index=int(bad[0]))
    return r


FAMILIES = ("poisson_ml", "discretized_gaussian")
_FAMILY_ALIASES = {"poissonml": "poisson_ml", "poisson": "poisson_ml",
                   "discretizedgaussian": "discretized_gaussian", "gaussian": "discretized_gaussian",
                   "lasso": "discretized_gaussian"}


def _family(name):
    key = str(name).lower()
    key = _FAMILY_ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ConfigurationError(f"unknown family {name!r}; choose from {FAMILIES}")
    return key


def heldout_loglik(y_test, model_test: AffineRateModel, w, family="poisson_ml") -> float:
    """Predictive log-likelihood of held-out counts at the rates ``model_test`` assigns to ``w``.

    ``poisson_ml`` sums Poisson log masses; ``discretized_gaussian`` sums
    :func:`log_discretized_gaussian_pmf` with ``mu = sigma^2 = rate``.
    """
    y = as_counts(y_test, model_test.n).astype(float)
    r = _positive_rates(model_test, w, "w")
    if _family(family) == "poisson_ml":
        return float(poisson_logpmf(y, r).sum())
    return float(np.sum(log_discretized_gaussian_pmf(y, r, np.sqrt(r))))


@dataclass(frozen=True)
class BayesFactor:
    log_value: float
    numerator: float
    denominator: float
    zero_denominator: bool


def bayes_factor(y, model: AffineRateModel, w_ml_k, w_ls_k) -> BayesFactor:
    """Log Bayes factor of the Poisson fit at ``w_ml_k`` against the discretized Gaussian at ``w_ls_k``.

    ``numerator`` and ``denominator`` are the two log likelihoods. When the
    Gaussian assigns zero mass to the data the log factor is ``+inf`` and
    ``zero_denominator`` is set.
    """
    num = heldout_loglik(y, model, w_ml_k, "poisson_ml")
    den = heldout_loglik(y, model, w_ls_k, "discretized_gaussian")
    if den == -math.inf:
        return BayesFactor(math.inf, num, den, True)
    return BayesFactor(num - den, num, den, False)


def through_origin_slope(x, y) -> float:
    """Slope ``beta`` of ``y ~ beta x`` fitted in log space (geometric mean of ``y / x``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("through-origin log fit needs positive data")
    return float(np.exp(np.mean(np.log(y / x))))


def bracket_fraction(x, y, factor=2.0) -> float:
    """Fraction of points with ``y / (beta x)`` within ``[1/factor, factor]``."""
    beta = through_origin_slope(x, y)
    ratio = np.asarray(y, float) / (beta * np.asarray(x, float))
    return float(np.mean((ratio >= 1 / factor) & (ratio <= factor)))


def standard_error(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


__all__ = [
    "RecoveryMetrics", "ROCPoint", "BayesFactor", "l2_error", "support_metrics", "roc_curve",
    "roc_auc", "discretized_gaussian_pmf", "log_discretized_gaussian_pmf", "poisson_logpmf",
    "heldout_loglik", "bayes_factor", "through_origin_slope", "bracket_fraction", "standard_error",
]
