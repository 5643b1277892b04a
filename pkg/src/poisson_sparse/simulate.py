"""Ground-truth signals, Poisson observations and the quenching model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ContractViolation, DomainError
from .model import AffineRateModel, ObservationSet, ParamVector, as_vector, rates
from .rng import make_rng


@dataclass(frozen=True)
class SignalSpec:
    p: int
    k: int
    s: float
    seed: int = 0

    def __post_init__(self):
        if not 1 <= int(self.k) <= int(self.p):
            raise ConfigurationError(f"need 1 <= k <= p, got k={self.k}, p={self.p}")
        if not self.s > 0:
            raise ConfigurationError(f"amplitude s must be > 0, got {self.s}")


def sparse_direction(p, k, rng) -> np.ndarray:
    """Uniformly random k-subset carrying Uniform(0, 1] weights, scaled to unit l1 norm."""
    w = np.zeros(p)
    support = rng.choice(p, size=k, replace=False)
    # 1 - U with U in [0, 1) lies in (0, 1], so no support entry is exactly zero
    w[support] = 1.0 - rng.random(k)
    return w / w.sum()


def generate_sparse_signal(spec: SignalSpec) -> ParamVector:
    """k-sparse nonnegative vector with ``||w||_1 = s``; deterministic per seed."""
    rng = make_rng(spec.seed)
    return ParamVector(spec.s * sparse_direction(int(spec.p), int(spec.k), rng))


def sample_observations(model: AffineRateModel, w_star, seed) -> ObservationSet:
    """Independent exact Poisson draws at ``rates(model, w_star)``.

    Uses numpy's sampler, which inverts the CDF for rates below 10 and applies
    transformed rejection (PTRS) above, so large rates are never approximated.
    """
    r = rates(model, as_vector(w_star, model.p, "w_star"))
    bad = np.flatnonzero(~(r >= 0))
    if bad.size:
        raise DomainError(f"negative rate {r[bad[0]]} at row {bad[0]}", index=int(bad[0]))
    return ObservationSet(make_rng(seed).poisson(r))


def make_quenching_model(lambda_base, q) -> AffineRateModel:
    """Affine form of the quenching rates ``lambda_i * (1 - q_i^T w)``."""
    lam = np.asarray(lambda_base, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if lam.ndim != 1 or q.shape[0] != lam.shape[0]:
        raise ContractViolation("q must have one row per base rate")
    if np.any(lam <= 0):
        raise ContractViolation("quenching base rates must be positive")
    if np.any(q < 0) or np.any(q >= 1):
        raise ContractViolation("quenching weights must lie in [0, 1)")
    return AffineRateModel(lam, -lam[:, None] * q)
