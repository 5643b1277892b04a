"""Random sensing matrices and a Restricted Eigenvalue estimate."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .rng import make_rng

KINDS = ("uniform01", "beta", "altdist", "shifted_subgaussian")
_KIND_ALIASES = {
    "uniform": "uniform01",
    "u01": "uniform01",
    "truncated_gaussian": "altdist",
    "shiftedsubgaussian": "shifted_subgaussian",
}


@dataclass(frozen=True)
class MatrixSpec:
    """Law and size of an i.i.d. random sensing matrix.

    ``kind`` is one of ``uniform01``, ``beta`` (``alpha``, ``beta``), ``altdist``
    (``mu``, ``sigma``: ``clip(Z + 1, 0, 2)`` with ``Z ~ N(mu, sigma^2)``) or
    ``shifted_subgaussian`` (``a_wedge``, ``a_vee``).
    """

    kind: str = "uniform01"
    n: int = 1
    p: int = 1
    seed: int = 0
    alpha: float = 1.0
    beta: float = 3.0
    mu: float = 0.0
    sigma: float = 0.5
    a_wedge: float = 1.0
    a_vee: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        kind = _KIND_ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise ConfigurationError(f"unknown matrix kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if int(self.n) < 1 or int(self.p) < 1:
            raise ConfigurationError("n and p must be >= 1")
        if kind == "beta" and not (self.alpha > 0 and self.beta > 0):
            raise ConfigurationError("beta parameters must be positive")
        if kind == "altdist" and not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if kind == "shifted_subgaussian" and not (self.a_wedge > 0 and self.a_vee > 0):
            raise ConfigurationError("a_wedge and a_vee must be positive")

    def to_dict(self) -> dict:
        keep = {
            "uniform01": (),
            "beta": ("alpha", "beta"),
            "altdist": ("mu", "sigma"),
            "shifted_subgaussian": ("a_wedge", "a_vee"),
        }[self.kind]
        doc = {"kind": self.kind, "n": self.n, "p": self.p, "seed": self.seed}
        doc.update({k: v for k, v in asdict(self).items() if k in keep})
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MatrixSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown matrix_spec keys: {sorted(unknown)}")
        return cls(**doc)


def generate_matrix(spec: MatrixSpec) -> np.ndarray:
    """Draw an ``n x p`` matrix with i.i.d. entries; bit-reproducible per seed."""
    rng = make_rng(spec.seed)
    shape = (int(spec.n), int(spec.p))
    if spec.kind == "uniform01":
        return rng.random(shape)
    if spec.kind == "beta":
        return rng.beta(spec.alpha, spec.beta, shape)
    if spec.kind == "altdist":
        return np.clip(rng.normal(spec.mu, spec.sigma, shape) + 1.0, 0.0, 2.0)
    # Two-point law on {-a_wedge, a_vee} with zero mean: bounded, hence sub-gaussian.
    p_up = spec.a_wedge / (spec.a_wedge + spec.a_vee)
    a_g = np.where(rng.random(shape) < p_up, spec.a_vee, -spec.a_wedge)
    return shifted_construction(a_g, spec.a_wedge)


def shifted_construction(a_g, a_wedge) -> np.ndarray:
    """``a_g + a_wedge`` elementwise; the result must be nonnegative."""
    out = np.asarray(a_g, dtype=float) + float(a_wedge)
    if np.any(out < 0):
        raise ContractViolation(
            f"a_wedge={a_wedge} does not cover the minimum entry {np.min(a_g)}"
        )
    return out


@dataclass(frozen=True)
class REEstimate:
    """Randomized upper estimate of the restricted eigenvalue ``gamma_k``."""

    gamma_hat: float
    k: int
    trials: int
    minimizer_found: np.ndarray
    exact: bool = False


def in_cone(u, k, tol=1e-12) -> bool:
    """Whether ``u`` lies in ``C(S)`` for some ``|S| <= k``.

    The best support for a fixed ``u`` is its ``k`` largest magnitudes.
    """
    mags = np.sort(np.abs(np.asarray(u, dtype=float)))[::-1]
    top = mags[:k].sum()
    return top > 0 and top >= mags[k:].sum() * (1 - tol)


def _coordinate_descent(G, u, mask, sweeps=30):
    """Exact coordinate-wise minimization of ``u'Gu / u'u`` within ``C(S)``."""
    u = u.astype(float).copy()
    p = u.shape[0]
    for _ in range(sweeps):
        Gu = G @ u
        a = float(u @ Gu)
        d = float(u @ u)
        l1_on = float(np.abs(u[mask]).sum())
        l1_off = float(np.abs(u[~mask]).sum())
        start = a / d
        for j in range(p):
            b, c, e = Gu[j], G[j, j], u[j]
            q = a / d
            # d/dt of (a + 2bt + ct^2) / (d + 2et + t^2) vanishes on this quadratic
            cands = []
            c2, c1, c0 = c * e - b, c * d - a, b * d - a * e
            if abs(c2) > 1e-300:
                disc = c1 * c1 - 4 * c2 * c0
                if disc >= 0:
                    sq = np.sqrt(disc)
                    cands += [(-c1 + sq) / (2 * c2), (-c1 - sq) / (2 * c2)]
            elif abs(c1) > 1e-300:
                cands.append(-c0 / c1)
            if mask[j]:
                need = l1_off - (l1_on - abs(e))
                if need > 0:
                    cands += [need - e, -need - e]
            else:
                room = l1_on - (l1_off - abs(e))
                cands += [room - e, -room - e]
            best_t, best_q = 0.0, q
            for t in cands:
                if not np.isfinite(t) or t == 0.0:
                    continue
                nj = abs(e + t)
                if mask[j]:
                    ok = l1_on - abs(e) + nj >= l1_off * (1 - 1e-12)
                else:
                    ok = l1_on >= (l1_off - abs(e) + nj) * (1 - 1e-12)
                den = d + 2 * e * t + t * t
                if not ok or den <= 1e-300 * max(d, 1.0):
                    continue
                qt = (a + 2 * b * t + c * t * t) / den
                if qt < best_q:
                    best_t, best_q = t, qt
            if best_t != 0.0 and best_q < q * (1 - 1e-13) - 1e-300:
                t = best_t
                a += 2 * b * t + c * t * t
                d += 2 * e * t + t * t
                if mask[j]:
                    l1_on += abs(e + t) - abs(e)
                else:
                    l1_off += abs(e + t) - abs(e)
                u[j] = e + t
                Gu += t * G[:, j]
        u /= np.linalg.norm(u)
        Gu = G @ u
        end = float(u @ Gu)
        if end >= start * (1 - 1e-12):
            break
    return u, float(u @ (G @ u)) / float(u @ u)


def _top_mask(u, k):
    mask = np.zeros(u.shape[0], dtype=bool)
    mask[np.argsort(-np.abs(u), kind="stable")[:k]] = True
    return mask


def _level_estimate(G, k, trials, rng, refine):
    p = G.shape[0]
    best_q, best_u = np.inf, None

    def consider(q, u):
        nonlocal best_q, best_u
        if q < best_q:
            best_q, best_u = q, u

    evals, evecs = np.linalg.eigh(G)
    for i in range(p):
        if in_cone(evecs[:, i], k):
            consider(float(evals[i]), evecs[:, i])
            break  # ascending order: the first cone member is the best eigenvector

    if trials:
        batch = max(1, min(trials, 2_000_000 // max(p, 1)))
        sampled_q, sampled_u = [], []
        done = 0
        while done < trials:
            m = min(batch, trials - done)
            order = np.argsort(rng.random((m, p)), axis=1)
            on = np.zeros((m, p), dtype=bool)
            np.put_along_axis(on, order[:, :k], True, axis=1)
            U = rng.standard_normal((m, p))
            l1_on = np.abs(np.where(on, U, 0.0)).sum(axis=1)
            l1_off = np.abs(np.where(on, 0.0, U)).sum(axis=1)
            frac = rng.random(m)
            scale = np.divide(frac * l1_on, l1_off, out=np.zeros(m), where=l1_off > 0)
            U = np.where(on, U, U * scale[:, None])
            q = np.einsum("ij,ij->i", U @ G, U) / np.einsum("ij,ij->i", U, U)
            keep = np.argsort(q)[: max(refine, 1)]
            sampled_q.append(q[keep])
            sampled_u.append(U[keep])
            done += m
        sampled_q = np.concatenate(sampled_q)
        sampled_u = np.concatenate(sampled_u)
        for i in np.argsort(sampled_q)[: max(refine, 1)]:
            consider(float(sampled_q[i]), sampled_u[i])
            if refine:
                u, q = _coordinate_descent(G, sampled_u[i], _top_mask(sampled_u[i], k))
                consider(q, u)

    return best_q, best_u


def _cone_members(V, k, tol=1e-10):
    """Row mask: which rows of ``V`` lie in some ``C(S)`` with ``|S| <= k``."""
    mags = -np.sort(-np.abs(V), axis=1)
    top = mags[:, :k].sum(axis=1)
    return (top > 0) & (top >= mags[:, k:].sum(axis=1) * (1 - tol))


def _exact_estimate(G, k):
    """Global minimum of the Rayleigh quotient over the cone union, for small p.

    The cone restricted to a sign orthant is polyhedral, so the minimizer is an
    eigenvector of ``G`` restricted to the span of one of its faces. Face spans
    are coordinate subspaces ``{u_Z = 0}``, optionally intersected with a
    hyperplane ``c^T u = 0`` with ``c`` in ``{-1, 1}^F``; all are enumerated.
    """
    p = G.shape[0]
    best_q, best_u = np.inf, None

    def consider(vals, vecs, idx):
        nonlocal best_q, best_u
        # vecs: (..., m, j) eigenvectors in the free coordinates
        V = np.swapaxes(vecs, -1, -2).reshape(-1, len(idx))
        q = vals.reshape(-1)
        full = np.zeros((V.shape[0], p))
        full[:, idx] = V
        ok = _cone_members(full, k)
        if ok.any():
            i = np.flatnonzero(ok)[np.argmin(q[ok])]
            if q[i] < best_q:
                best_q, best_u = float(q[i]), full[i]

    for m in range(1, p + 1):
        for idx in itertools.combinations(range(p), m):
            idx = list(idx)
            GF = G[np.ix_(idx, idx)]
            vals, vecs = np.linalg.eigh(GF)
            consider(vals, vecs, idx)
            if m == 1:
                continue
            signs = np.array(list(itertools.product((1.0, -1.0), repeat=m - 1)))
            C = np.hstack([np.ones((signs.shape[0], 1)), signs]) / np.sqrt(m)
            # Householder reflection mapping e_1 to c; its other columns span c-perp
            v = C.copy()
            v[:, 0] -= 1.0
            norms = np.linalg.norm(v, axis=1, keepdims=True)
            v = np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)
            H = np.eye(m)[None] - 2.0 * v[:, :, None] * v[:, None, :]
            B = H[:, :, 1:]
            R = np.swapaxes(B, 1, 2) @ GF @ B
            vals, w = np.linalg.eigh(R)
            consider(vals, B @ w, idx)
    return best_q, best_u


def estimate_re(a, k, trials=1000, seed=0, refine=3, exact_max_p=10) -> REEstimate:
    """Upper estimate of the restricted eigenvalue ``gamma_k`` of ``a``.

    Minimizes ``||a u||^2 / (n ||u||^2)`` over vectors found in the cone
    ``{u : ||u_S||_1 >= ||u_{S^c}||_1, |S| <= k}``: eigenvectors that happen to
    lie in the cone, ``trials`` random cone vectors per sparsity level, and
    coordinate-descent refinement of the best ones. Each level ``j <= k`` uses
    its own stream ``(seed, j)`` and the result is the minimum over levels, so
    the estimate is non-increasing in ``k``.

    For ``p <= exact_max_p`` every face of the cone is enumerated instead and
    the result is exact (``exact=True``); the cost grows like ``3^p``.
    Otherwise the value is attained by an explicit cone vector, so it can only
    overestimate the true constant (certifying ``gamma_k`` is NP-hard).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractViolation("matrix must be 2-D")
    n, p = a.shape
    k, trials = int(k), int(trials)
    if not 1 <= k <= p:
        raise ConfigurationError(f"k must lie in [1, p={p}], got {k}")
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    G = a.T @ a / n
    if p <= exact_max_p:
        best_q, best_u = _exact_estimate(G, k)
        return REEstimate(max(best_q, 0.0), k, trials, best_u / np.linalg.norm(best_u), True)
    best_q, best_u = np.inf, None
    for level in range(1, k + 1):
        rng = make_rng(seed, level)
        q, u = _level_estimate(G, level, trials, rng, refine)
        if q < best_q:
            best_q, best_u = q, u
    best_u = best_u / np.linalg.norm(best_u)
    return REEstimate(max(float(best_q), 0.0), k, trials, best_u, False)
