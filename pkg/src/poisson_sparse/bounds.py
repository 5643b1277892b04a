"""Error bounds for the l1-constrained Poisson ML decoder.

Upper bound machinery (restricted strong convexity constants, the closed-form
l2 error bound), the minimax lower bound built from a Gilbert-Varshamov
packing and Fano's inequality, and Monte Carlo checks of the concentration and
curvature lemmas that the upper bound rests on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import (
    BoundConditionWarning,
    ConfigurationError,
    ConstructionError,
    ContractViolation,
    DomainError,
    InfeasibleRegimeError,
)
from .model import AffineRateModel, ParamVector, RateSummary, as_vector, rate_summary, rates
from .rng import make_rng

DEFAULT_C = 34.0


@dataclass(frozen=True)
class BoundInputs:
    lambda_min: float
    lambda_max: float
    lambda_harmonic: float
    a_max: float
    gamma_k: float
    k: int
    n: int
    zeta: float

    def __post_init__(self):
        for name in ("lambda_min", "lambda_max", "lambda_harmonic", "a_max", "gamma_k"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")
        if int(self.k) < 1 or int(self.n) < 1:
            raise ConfigurationError("k and n must be >= 1")
        if not 0 < self.zeta < 1:
            raise ConfigurationError(f"zeta must lie in (0, 1), got {self.zeta}")

    @classmethod
    def from_summary(cls, summary: RateSummary, gamma_k, k, n, zeta) -> "BoundInputs":
        return cls(
            lambda_min=summary.lambda_min,
            lambda_max=summary.lambda_max,
            lambda_harmonic=summary.lambda_harmonic,
            a_max=summary.a_max,
            gamma_k=gamma_k,
            k=k,
            n=n,
            zeta=zeta,
        )

    @property
    def zeta_floor(self) -> float:
        return zeta_floor(self.n, self.lambda_min, self.lambda_harmonic)

    def check_zeta(self) -> list:
        """Warn (and return the message) when zeta is below its floor."""
        floor = self.zeta_floor
        if self.zeta < floor:
            msg = f"zeta={self.zeta:g} is below its floor {floor:.4g}; bound not guaranteed"
            warnings.warn(msg, BoundConditionWarning, stacklevel=3)
            return [msg]
        return []


def zeta_floor(n, lambda_min, lambda_harmonic) -> float:
    """Smallest confidence parameter covered by the concentration argument."""
    return 2.0 * math.exp(-n * lambda_min * min(1.0, lambda_min) / (4.0 * lambda_harmonic))


@dataclass(frozen=True)
class SCConstants:
    kappa: float
    tau: float
    nu_n: float
    delta: float


def sc_constants(inp: BoundInputs) -> SCConstants:
    """Curvature ``kappa``, slack ``tau``, gradient bound ``nu_n`` and error radius ``delta``."""
    inp.check_zeta()
    root = math.sqrt(math.log(2.0 / inp.zeta) / (inp.n * inp.lambda_harmonic))
    kappa = inp.gamma_k / (9.0 * inp.lambda_max)
    tau = inp.a_max**2 * (4.0 + 2.0 * math.log(inp.lambda_max / inp.lambda_min)) * root
    nu_n = 2.0 * inp.a_max * root
    delta = 3.0 * (tau + nu_n) * math.sqrt(inp.k) / kappa
    return SCConstants(kappa, tau, nu_n, delta)


def theorem1_bound(inp: BoundInputs) -> float:
    """High-probability l2 error bound of the constrained ML decoder."""
    inp.check_zeta()
    lead = 54.0 * inp.lambda_max * inp.a_max**2 * (3.0 + math.log(inp.lambda_max / inp.lambda_min))
    return lead / inp.gamma_k * math.sqrt(
        inp.k * math.log(2.0 / inp.zeta) / (inp.lambda_harmonic * inp.n)
    )


@dataclass
class BoundReport:
    kappa: float
    tau: float
    nu_n: float
    delta: float
    theorem1_value: float
    fano_value: float | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(inp: BoundInputs, fano_value=None) -> BoundReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundConditionWarning)
        c = sc_constants(inp)
        value = theorem1_bound(inp)
    return BoundReport(c.kappa, c.tau, c.nu_n, c.delta, value, fano_value, inp.check_zeta())


# --- minimax lower bound ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Codebook:
    dim: int
    d_min: int
    words: np.ndarray

    @property
    def size(self) -> int:
        return self.words.shape[0]

    def distances(self) -> np.ndarray:
        w = self.words.astype(np.int64)
        return (w[:, None, :] != w[None, :, :]).sum(axis=2)


def gv_target(dim) -> int:
    """Codebook size promised by the Gilbert-Varshamov argument, ``ceil(exp(dim/8))``."""
    return math.ceil(math.exp(dim / 8.0))


def _min_distance_ok(words, d_min) -> bool:
    if len(words) < 2:
        return True
    w = np.asarray(words, dtype=np.int64)
    dist = (w[:, None, :] != w[None, :, :]).sum(axis=2)
    np.fill_diagonal(dist, d_min)
    return bool(dist.min() >= d_min)


def gv_codebook(dim, d_min, seed=0, budget=None) -> Codebook:
    """Binary words with pairwise Hamming distance ``>= d_min``.

    Random greedy: draw words and keep each one that is far enough from all
    kept words, until ``gv_target(dim)`` are found or ``budget`` draws are
    spent. For ``dim <= 16`` a lexicographic greedy scan is the fallback.
    """
    dim, d_min = int(dim), int(d_min)
    if not 1 <= d_min <= dim:
        raise ConfigurationError(f"need 1 <= d_min <= dim, got d_min={d_min}, dim={dim}")
    target = gv_target(dim)
    if dim < 63 and target > 2**dim:
        raise ConstructionError(f"{target} words requested from a space of {2**dim}")
    budget = int(budget) if budget is not None else 200 * target + 1000
    rng = make_rng(seed)
    kept = np.empty((0, dim), dtype=np.uint8)
    draws = 0
    while kept.shape[0] < target and draws < budget:
        cand = rng.integers(0, 2, size=dim, dtype=np.uint8)
        draws += 1
        if kept.shape[0] == 0 or (kept != cand).sum(axis=1).min() >= d_min:
            kept = np.vstack([kept, cand])
    if kept.shape[0] < target and dim <= 16:
        kept = np.empty((0, dim), dtype=np.uint8)
        bits = 1 << np.arange(dim - 1, -1, -1)
        for code in range(2**dim):
            cand = ((code & bits) > 0).astype(np.uint8)
            if kept.shape[0] == 0 or (kept != cand).sum(axis=1).min() >= d_min:
                kept = np.vstack([kept, cand])
                if kept.shape[0] >= target:
                    break
    if kept.shape[0] < target:
        raise ConstructionError(
            f"found {kept.shape[0]} of {target} words with distance {d_min}; retry with a new seed"
        )
    if not _min_distance_ok(kept, d_min):
        raise ConstructionError("codebook failed its pairwise distance check")
    kept.setflags(write=False)
    return Codebook(dim, d_min, kept)


def packing_step(s, a_min, eta, n, c) -> float:
    """Common coordinate offset ``(1/c) sqrt(a_min s / (n eta))`` of the packing."""
    return math.sqrt(a_min * s / (n * eta)) / c


def minimal_packing_n(s, k, a_min, eta, c) -> float:
    """Smallest n for which ``s >= 2 (k-1) * packing_step``."""
    return 4.0 * (k - 1) ** 2 * a_min / (c * c * eta * s)


def packing_set(cb: Codebook, s, k, a_min, eta, n, c=DEFAULT_C, p=None, columns=None):
    """One k-sparse hypothesis per codeword.

    ``w_j = (s - step (k-1)) e_anchor + step * sum_t tau_j(t) e_t``. ``columns``
    lists the k coordinates used, anchor last; it defaults to ``0..k-1``.
    """
    k = int(k)
    if cb.dim != k - 1:
        raise ContractViolation(f"codebook dimension {cb.dim} does not match k-1={k - 1}")
    p = k if p is None else int(p)
    columns = list(range(k)) if columns is None else [int(j) for j in columns]
    if len(columns) != k or len(set(columns)) != k or max(columns) >= p:
        raise ContractViolation("columns must be k distinct indices below p")
    step = packing_step(s, a_min, eta, n, c)
    if s < 2.0 * step * (k - 1):
        raise InfeasibleRegimeError(
            f"s={s:g} < 2(k-1)*step; need n >= {minimal_packing_n(s, k, a_min, eta, c):.4g}"
        )
    out = []
    for word in cb.words:
        w = np.zeros(p)
        w[columns[-1]] = s - step * (k - 1)
        w[columns[:-1]] = step * word
        out.append(ParamVector(w))
    return out


def poisson_kl(lambda1, lambda2):
    """KL divergence ``KL(Poisson(lambda1) || Poisson(lambda2))``; vectorizes."""
    l1 = np.asarray(lambda1, dtype=float)
    l2 = np.asarray(lambda2, dtype=float)
    if np.any(~(l1 > 0)) or np.any(~(l2 > 0)):
        raise DomainError("Poisson rates must be positive")
    out = l1 * np.log(l1 / l2) - l1 + l2
    return float(out) if out.ndim == 0 else out


def fano_closed_form(a_min, s, k, n, eta, c=DEFAULT_C) -> float:
    """``(0.3 / 4c) sqrt((k-1) a_min s / (n eta))``."""
    return 0.3 / (4.0 * c) * math.sqrt((k - 1) * a_min * s / (n * eta))


def design_eta(matrix) -> float:
    """Largest eigenvalue of ``A^T A / n``, i.e. ``sigma_max(A)^2 / n``."""
    a = np.asarray(matrix, dtype=float)
    sigma = np.linalg.norm(a, 2)
    return float(sigma * sigma / a.shape[0])


def fano_lower_bound(model: AffineRateModel, s, k, c=DEFAULT_C, seed=0, sample_constant=1.0):
    """Minimax lower bound on the expected l2 error over k-sparse, l1 <= s signals.

    Returns ``(bound, diagnostics)``. The bound is the closed form
    :func:`fano_closed_form`; the diagnostics rebuild the hypothesis packing on
    ``model`` and report the exact average pairwise KL divergence ``I`` along
    with the two inequalities the closed form depends on.

    Raises
    ------
    InfeasibleRegimeError
        If ``k < 9``, ``c < 34``, ``a_min <= 0`` or n is below the sample-size
        condition ``sample_constant * a_min (k-1)^2 / (s eta)``.
    """
    k = int(k)
    A = model.matrix
    n, p = A.shape
    if k < 9:
        raise InfeasibleRegimeError(f"the lower bound needs k >= 9, got {k}")
    if k > p:
        raise InfeasibleRegimeError(f"k={k} exceeds p={p}")
    if c < 34:
        raise InfeasibleRegimeError(f"the lower bound needs c >= 34, got {c}")
    a_min = float(A.min())
    if not a_min > 0:
        raise InfeasibleRegimeError(f"minimum matrix entry must be positive, got {a_min}")
    eta = design_eta(A)
    n_needed = sample_constant * a_min * (k - 1) ** 2 / (s * eta)
    if n < n_needed:
        raise InfeasibleRegimeError(f"n={n} < C a_min (k-1)^2 / (s eta) = {n_needed:.4g}")

    cb = gv_codebook(k - 1, math.ceil((k - 1) / 4), seed)
    anchor = int(np.unravel_index(np.argmin(A), A.shape)[1])
    others = [j for j in range(p) if j != anchor][: k - 1]
    hyps = packing_set(cb, s, k, a_min, eta, n, c, p=p, columns=others + [anchor])

    W = np.stack([h.values for h in hyps])
    R = model.base_rates[None, :] + W @ A.T  # M x n rates
    M = W.shape[0]
    kl = poisson_kl(R[:, None, :], R[None, :, :])  # M x M x n
    info = float(kl.sum() / M**2)
    diff = W[:, None, :] - W[None, :, :]
    pair = np.sqrt((diff**2).sum(axis=2))
    min_dist = float(pair[~np.eye(M, dtype=bool)].min())
    log_m = math.log(M)
    ratio = (info + math.log(2.0)) / log_m
    info_cap = (k - 1) / c**2
    diagnostics = {
        "eta": eta,
        "a_min": a_min,
        "codebook_size": M,
        "codebook_d_min": cb.d_min,
        "I": info,
        "I_cap": info_cap,
        "I_ok": info <= info_cap,
        "fano_ratio": ratio,
        "fano_ratio_ok": ratio <= 0.7,
        "min_pair_distance": min_dist,
        "min_pair_distance_floor": packing_step(s, a_min, eta, n, c) * math.sqrt(k - 1) / 2.0,
        "fano_generic": 0.5 * min_dist * (1.0 - ratio),
        "n_required": n_needed,
    }
    if not (diagnostics["I_ok"] and diagnostics["fano_ratio_ok"]):
        warnings.warn("packing diagnostics do not support the closed-form bound",
                      BoundConditionWarning, stacklevel=2)
    return fano_closed_form(a_min, s, k, n, eta, c), diagnostics


# --- Monte Carlo checks of the lemmas --------------------------------------


def bernstein_radius(n, lambda_harmonic, zeta) -> float:
    return 2.0 * math.sqrt(math.log(2.0 / zeta) / (n * lambda_harmonic))


def bernstein_coverage(model: AffineRateModel, w_star, zeta, trials, seed=0) -> float:
    """Fraction of trials with ``mean|y_i / lambda_i - 1| <= bernstein_radius``.

    Trial ``t`` draws its counts from the stream ``(seed, t)``.
    """
    if int(trials) < 1:
        raise ConfigurationError("trials must be >= 1")
    if not 0 < zeta < 1:
        raise ConfigurationError("zeta must lie in (0, 1)")
    summary = rate_summary(model, w_star)
    r = summary.rates
    n = model.n
    floor = zeta_floor(n, summary.lambda_min, summary.lambda_harmonic)
    if zeta < floor:
        warnings.warn(f"zeta={zeta:g} is below its floor {floor:.4g}",
                      BoundConditionWarning, stacklevel=2)
    radius = bernstein_radius(n, summary.lambda_harmonic, zeta)
    hits = 0
    for t in range(int(trials)):
        y = make_rng(seed, t).poisson(r)
        hits += np.abs(y / r - 1.0).mean() <= radius
    return hits / int(trials)


def curvature_gap(model: AffineRateModel, w_star, delta):
    """``delta Q_1`` for each row of ``delta`` (NaN where a rate turns non-positive)."""
    r = rates(model, w_star)
    D = np.atleast_2d(delta)
    AD = D @ model.matrix.T
    x = AD / r
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = -r * np.log1p(x) + AD
    out = terms.mean(axis=1)
    out[np.any(x <= -1.0, axis=1)] = np.nan
    return out


def strong_convexity_diagnostic(model: AffineRateModel, w_star, gamma_k, samples, seed=0,
                                return_counts=False):
    """Smallest ``delta Q_1 - gamma_k ||Delta||^2 / (9 lambda_max)`` over random feasible Delta.

    ``Delta = t (w' - w_star)`` with ``w'`` drawn from the feasible set
    ``{w >= 0, ||w||_1 <= s}`` and ``t`` log-uniform on ``[1e-4, 1]``, so both
    small and large perturbations are probed. A negative result falsifies the
    supplied ``gamma_k``. Samples that drive a rate to zero or below are
    skipped; with ``return_counts`` the result is ``(min_margin, skipped)``.
    """
    if int(samples) < 1:
        raise ConfigurationError("samples must be >= 1")
    w = as_vector(w_star, model.p, "w_star")
    summary = rate_summary(model, w)
    s = float(np.abs(w).sum())
    rng = make_rng(seed)
    m, p = int(samples), model.p
    conc = np.where(rng.random(m) < 0.5, 0.1, 1.0)
    W = rng.gamma(conc[:, None], size=(m, p))
    W /= W.sum(axis=1, keepdims=True)
    W *= s * rng.random(m)[:, None]
    t = 10.0 ** rng.uniform(-4.0, 0.0, m)
    D = t[:, None] * (W - w[None, :])
    gap = curvature_gap(model, w, D)
    skipped = int(np.isnan(gap).sum())
    margin = gap - gamma_k * (D**2).sum(axis=1) / (9.0 * summary.lambda_max)
    min_margin = float(np.nanmin(margin)) if skipped < m else float("nan")
    return (min_margin, skipped) if return_counts else min_margin
