"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (lines are re-printed in the terminal summary) or directly:
``python3 tests/test_acceptance.py``. Heavy experiments write to a temporary
directory and are shared between criteria that read the same run.
"""

from __future__ import annotations

import csv
import itertools
import math
import shutil
import sys
import tempfile
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import poisson as poisson_dist

from poisson_sparse.bounds import BoundInputs, fano_lower_bound, gv_codebook, poisson_kl, \
    sc_constants, theorem1_bound
from poisson_sparse.experiments import REGISTRY, run_experiment
from poisson_sparse.metrics import bracket_fraction, discretized_gaussian_pmf, heldout_loglik
from poisson_sparse.model import AffineRateModel, get_loss
from poisson_sparse.sensing import MatrixSpec, generate_matrix
from poisson_sparse.solver import ConstraintSet, SolverConfig, minimize, project_nonneg_l1, \
    project_simplex

RESULTS: dict = {}
_WORK = Path(tempfile.mkdtemp(prefix="poisson_sparse_acceptance_"))
_RUNS: dict = {}


def _record(num, passed, detail):
    line = f"CRITERION {num}: {'PASS' if passed else 'FAIL'} {detail}"
    RESULTS[num] = line
    print(line)
    return passed


def _run(name, doc):
    if name not in _RUNS:
        t0 = time.perf_counter()
        m = run_experiment({"schema_version": 1, "output_dir": str(_WORK / name), **doc}, workers=1)
        with open(m["trials_csv"]) as fh:
            rows = list(csv.DictReader(fh))
        _RUNS[name] = (m, rows, time.perf_counter() - t0)
    return _RUNS[name]


# --- 1: solver vs grid search ------------------------------------------------


def _grid_losses(W, A, base, y, loss):
    r = base[None, :] + W @ A.T
    if loss == "poisson":
        return np.mean(r - y * np.log(r), axis=1)
    return np.mean((y - r) ** 2, axis=1)


def _grid_argmin(A, base, y, s, loss):
    # coarse lattice, then tenfold refinements down to 1e-4, then refined twice more
    p = A.shape[1]
    steps = [s / 40]
    while steps[-1] / 10 > 1e-4:
        steps.append(steps[-1] / 10)
    steps += [1e-4, 1e-5, 1e-6]
    center, prev = None, None
    for h in steps:
        if center is None:
            axes = [np.arange(0, int(round(s / h)) + 1)] * p
        else:
            half = int(round(2 * prev / h))
            c = np.round(center / h).astype(int)
            axes = [np.arange(max(ci - half, 0), ci + half + 1) for ci in c]
        idx = np.array(list(itertools.product(*axes)), dtype=float)
        W = idx * h
        W = W[W.sum(axis=1) <= s * (1 + 1e-12)]
        best, best_val = None, np.inf
        for chunk in np.array_split(W, max(1, len(W) // 50000)):
            vals = _grid_losses(chunk, A, base, y, loss)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val, best = vals[i], chunk[i]
        center, prev = best, h
    return center


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    cfg = SolverConfig(obj_tol=1e-14, step_tol=1e-14, max_iters=100000)
    worst = 0.0
    for i in range(200):
        p = int(rng.integers(1, 4))
        n = 12
        s = float(rng.choice([0.5, 1.0, 2.0]))
        A = rng.uniform(0.0, 1.0, (n, p))
        base = rng.uniform(0.5, 2.0, n)
        w_true = rng.dirichlet(np.ones(p)) * s * rng.uniform(0.3, 1.5)
        y = rng.poisson(20 * (base + A @ w_true)) / 20.0
        model = AffineRateModel(base, A)
        loss = "poisson" if i % 2 == 0 else "ls"
        w_hat = minimize(loss, model, y, ConstraintSet(s, "le"), cfg).w_hat.values
        w_grid = _grid_argmin(A, base, y, s, loss)
        worst = max(worst, float(np.linalg.norm(w_hat - w_grid)))
    elapsed = time.perf_counter() - t0
    return _record(1, worst <= 1e-4 and elapsed < 60,
                   f"max l2 gap {worst:.2e} (<= 1e-4) over 200 instances, {elapsed:.1f}s (< 60s)")


# --- 2: gradients ------------------------------------------------------------


def criterion_2():
    rng = np.random.default_rng(202)
    worst = {}
    for name in ("poisson", "rlasso", "ls"):
        loss = get_loss(name)
        err = 0.0
        for _ in range(100):
            n, p = int(rng.integers(3, 12)), int(rng.integers(1, 8))
            model = AffineRateModel(rng.uniform(0.5, 3.0, n), rng.uniform(0.0, 1.0, (n, p)))
            y = rng.poisson(3.0, n)
            w = rng.uniform(0.05, 1.0, p)
            _, g = loss(model, y, w)
            h = 1e-6
            fd = np.array([(loss(model, y, w + h * e)[0] - loss(model, y, w - h * e)[0]) / (2 * h)
                           for e in np.eye(p)])
            err = max(err, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)))
        worst[name] = err
    ok = all(v <= 1e-5 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return _record(2, ok, f"max relative FD error: {detail} (<= 1e-5)")


# --- 3: projections ----------------------------------------------------------


def _brute_simplex(v, s):
    best, dist = None, np.inf
    p = v.size
    for r in range(1, p + 1):
        for S in itertools.combinations(range(p), r):
            S = list(S)
            theta = (v[S].sum() - s) / len(S)
            w = np.zeros(p)
            w[S] = v[S] - theta
            if np.all(w >= -1e-15):
                d = np.linalg.norm(w - v)
                if d < dist:
                    best, dist = np.maximum(w, 0.0), d
    return best


def _brute_ball(v, s):
    cands = [_brute_simplex(v, s), np.zeros_like(v)]
    clip = np.maximum(v, 0.0)
    if clip.sum() <= s:
        cands.append(clip)
    return min(cands, key=lambda w: np.linalg.norm(w - v))


def criterion_3():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 5))
        v = rng.normal(0.0, 2.0, p)
        s = float(rng.uniform(0.1, 3.0))
        worst = max(worst, float(np.abs(project_simplex(v, s) - _brute_simplex(v, s)).max()),
                    float(np.abs(project_nonneg_l1(v, s) - _brute_ball(v, s)).max()))
    return _record(3, worst <= 1e-8, f"max deviation {worst:.1e} (<= 1e-8) on 1000 inputs")


# --- 4: lambda_h linearity -----------------------------------------------------


def criterion_4():
    t0 = time.perf_counter()
    m, rows, _ = _run("lambda-h", {"experiment": "lambda-h-scaling", "n_list": [100], "p": 400,
                                   "k_list": [5], "s_list": [10.0, 100.0, 1000.0, 10000.0],
                                   "trials": 50})
    by = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by[r["matrix"]][float(r["s"])].append(float(r["lambda_h"]))
    r2 = {}
    for design, d in by.items():
        s = np.array(sorted(d))
        lam = np.array([np.mean(d[v]) for v in s])
        X = np.column_stack([np.ones_like(s), s])
        coef, *_ = np.linalg.lstsq(X, lam, rcond=None)
        resid = lam - X @ coef
        r2[design] = 1.0 - resid @ resid / np.sum((lam - lam.mean()) ** 2)
    elapsed = time.perf_counter() - t0
    ok = len(r2) == 3 and all(v >= 0.99 for v in r2.values()) and elapsed < 60
    detail = ", ".join(f"{k} R2={v:.5f}" for k, v in r2.items())
    return _record(4, ok, f"{detail} (>= 0.99), {elapsed:.1f}s")


# --- 5, 6, 12: tightness -----------------------------------------------------

_TIGHT = {"experiment": "tightness", "p": 400, "k_list": [5], "lambda0": 4.0,
          "n_list": [100, 300], "matrix_spec": [{"kind": "uniform01"}],
          "s_list": [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0, 20000.0],
          "trials": 10}


def criterion_5():
    m, rows, elapsed = _run("tightness", _TIGHT)
    x = np.array([float(r["s_over_sqrt_n_lambda_h"]) for r in rows])
    e = np.array([float(r["l2_error"]) for r in rows])
    corr = float(np.corrcoef(x, e)[0, 1])
    frac = bracket_fraction(x, e, 2.0)
    ok = corr >= 0.9 and frac >= 0.8 and elapsed <= 900
    return _record(5, ok, f"pearson {corr:.4f} (>= 0.9), within factor 2 of through-origin fit "
                          f"{frac:.3f} (>= 0.8), {len(rows)} points, {elapsed:.1f}s")


def criterion_6():
    m, rows, elapsed = _run("sqrt-k", {"experiment": "tightness", "p": 400, "n_list": [100],
                                       "s_list": [1000.0], "lambda0": 4.0,
                                       "matrix_spec": [{"kind": "uniform01"}],
                                       "k_list": [2, 8, 18, 32], "trials": 20})
    by = defaultdict(list)
    for r in rows:
        by[int(r["k"])].append(float(r["l2_error"]))
    ks = sorted(by)
    means = [float(np.mean(by[k])) for k in ks]
    corr = float(np.corrcoef(np.sqrt(ks), means)[0, 1])
    ok = corr >= 0.9 and elapsed <= 600
    detail = ", ".join(f"k={k}: {v:.3g}" for k, v in zip(ks, means))
    return _record(6, ok, f"corr(mean error, sqrt k) {corr:.4f} (>= 0.9); {detail}; {elapsed:.1f}s")


def criterion_12():
    m, rows, _ = _run("tightness", _TIGHT)
    held = np.array([int(r["bound_holds"]) for r in rows])
    frac = float(held.mean())
    return _record(12, frac >= 0.9, f"bound holds in {frac:.3f} of {held.size} trials (>= 0.9)")


# --- 7: Gaussian vs Poisson ----------------------------------------------------


def criterion_7():
    m, rows, elapsed = _run("gvp", {"experiment": "gauss-vs-poisson", "p": 400, "n_list": [100],
                                    "lambda0": 0.01, "s_list": [1000.0], "trials": 100,
                                    "matrix_spec": [{"kind": "beta", "alpha": 1.0, "beta": 3.0}]})
    err = defaultdict(dict)
    for r in rows:
        err[r["estimator"]][int(r["trial"])] = float(r["l2_error"])
    trials = sorted(err["PoissonML"])
    P = np.array([err["PoissonML"][t] for t in trials])
    G = np.array([err["GaussianML"][t] for t in trials])
    frac = float(np.mean(P < G))
    ratio = float(G.mean() / P.mean())
    ok = frac >= 0.8 and ratio > 1 and elapsed <= 600
    return _record(7, ok, f"Poisson better in {frac:.2f} of trials (>= 0.8), mean error ratio "
                          f"{ratio:.3f} (> 1), {elapsed:.1f}s")


# --- 8: support recovery vs n --------------------------------------------------


def criterion_8():
    n_list = [2, 50, 100, 200, 300, 400]
    m, rows, elapsed = _run("support-n", {"experiment": "support-vs-n", "p": 400, "k_list": [40],
                                          "lambda0": 100.0, "thresholds": [1e-4],
                                          "n_list": n_list, "trials": 100})
    succ = defaultdict(lambda: defaultdict(list))
    for r in rows:
        succ[r["estimator"]][int(r["n"])].append(int(r["success"]))
    first = {}
    for name, d in succ.items():
        hits = [n for n in sorted(d) if np.mean(d[n]) >= 0.9]
        first[name] = hits[0] if hits else None
    pml, rl = first.get("PoissonML"), first.get("RescaledLASSO")
    ok = pml is not None and (rl is None or pml <= 0.75 * rl)
    best = {name: max(np.mean(v) for v in d.values()) for name, d in succ.items()}
    return _record(8, ok and elapsed <= 1800,
                   f"n at success 0.9: PoissonML {pml}, RescaledLASSO {rl}; best success "
                   f"{', '.join(f'{k} {v:.2f}' for k, v in best.items())} over n={n_list}; "
                   f"{elapsed:.1f}s")


# --- 9: ROC --------------------------------------------------------------------


def criterion_9():
    m, rows, elapsed = _run("roc", {"experiment": "roc", "p": 200, "n_list": [100],
                                    "k_list": [20], "lambda0": 100.0, "trials": 100})
    auc = m["summary"]["auc"]
    a_p, a_r = auc["PoissonML@cell0"], auc["RescaledLASSO@cell0"]
    return _record(9, a_p >= a_r and elapsed <= 900,
                   f"AUC PoissonML {a_p:.5f} vs RescaledLASSO {a_r:.5f}, {elapsed:.1f}s")


# --- 10: Bernstein coverage ----------------------------------------------------


def criterion_10():
    t0 = time.perf_counter()
    defaults = REGISTRY["bernstein-check"].defaults
    m, rows, _ = _run("bernstein", {"experiment": "bernstein-check", "zeta": 0.1,
                                    "lambda0": [5.0, 50.0, 500.0], "trials": 10000})
    cov = defaultdict(list)
    lam = {}
    for r in rows:
        cov[float(r["lambda0"])].append(int(r["covered"]))
        lam[float(r["lambda0"])] = float(r["lambda_h"])
    rates = {k: float(np.mean(v)) for k, v in cov.items()}
    elapsed = time.perf_counter() - t0
    ok = all(v >= 0.9 for v in rates.values()) and elapsed <= 120
    detail = ", ".join(f"lambda_h={lam[k]:.4g}: {v:.4f}" for k, v in sorted(rates.items()))
    return _record(10, ok, f"coverage at n={defaults['n_list'][0]}: {detail} (>= 0.9), "
                           f"{elapsed:.1f}s")


# --- 11: bound consistency -----------------------------------------------------


def criterion_11():
    rng = np.random.default_rng(1111)
    violations, worst = 0, 0.0
    for _ in range(1000):
        lmin = float(rng.uniform(0.1, 10))
        lmax = lmin * float(rng.uniform(1, 100))
        lh = float(rng.uniform(lmin, lmax))
        inp = BoundInputs(lmin, lmax, lh, float(rng.uniform(1, 10)), float(rng.uniform(0.01, 5)),
                          int(rng.integers(1, 50)), int(rng.integers(1, 10000)),
                          float(rng.uniform(0.01, 0.99)))
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            b = theorem1_bound(inp)
            violations += int(not sc_constants(inp).delta <= b)
            k4 = theorem1_bound(BoundInputs(**{**inp.__dict__, "k": 4 * inp.k}))
            n4 = theorem1_bound(BoundInputs(**{**inp.__dict__, "n": 4 * inp.n}))
        worst = max(worst, abs(k4 / b - 2.0) / 2.0, abs(n4 / b - 0.5) / 0.5)
    ok = violations == 0 and worst <= 1e-14
    return _record(11, ok, f"delta > bound in {violations}/1000; worst relative deviation of "
                           f"4k and 4n ratio tests {worst:.1e} (<= 1e-14)")


# --- 13: GV / Fano ---------------------------------------------------------------


def _kl_series(a, b):
    hi = int(max(a, b) + 40 * math.sqrt(max(a, b)) + 60)
    y = np.arange(hi + 1)
    pa = poisson_dist.pmf(y, a)
    lpa, lpb = poisson_dist.logpmf(y, a), poisson_dist.logpmf(y, b)
    return float(np.sum(pa * (lpa - lpb)))


def criterion_13():
    cb = gv_codebook(8, 2)
    W = cb.words.astype(int)
    dmin = min(int(np.sum(W[i] != W[j])) for i, j in itertools.combinations(range(len(W)), 2))
    a = generate_matrix(MatrixSpec("uniform01", 200, 30, seed=4))
    bound, diag = fano_lower_bound(AffineRateModel.constant(1.0, a), 10.0, 9)
    k, c = 9, 34.0
    rng = np.random.default_rng(1313)
    kl_err = max(abs(poisson_kl(x, z) - _kl_series(x, z))
                 for x, z in rng.uniform(0.1, 50, (100, 2)))
    ok = (len(W) >= 3 and dmin >= 2 and bound > 0 and diag["I"] <= (k - 1) / c**2
          and diag["fano_ratio"] <= 0.7 and kl_err <= 1e-9)
    return _record(13, ok, f"codebook {len(W)} words, min distance {dmin}; Fano bound {bound:.3e}, "
                           f"I={diag['I']:.3e} (cap {(k - 1) / c**2:.3e}), ratio "
                           f"{diag['fano_ratio']:.3f} (<= 0.7); KL series gap {kl_err:.1e}")


# --- 14: discretized Gaussian PMF -----------------------------------------------


def criterion_14():
    rng = np.random.default_rng(1414)
    mass_err = 0.0
    for _ in range(100):
        mu, sigma = float(rng.uniform(0, 50)), float(rng.uniform(0.05, 20))
        y = np.arange(int(mu + 40 * sigma + 50))
        mass_err = max(mass_err, abs(float(np.sum(discretized_gaussian_pmf(y, mu, sigma))) - 1.0))
    ll_err = 0.0
    for _ in range(100):
        n, p = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        model = AffineRateModel(rng.uniform(0.1, 10, n), rng.uniform(0, 1, (n, p)))
        w = rng.uniform(0, 20 / p, p) * 0.9
        r = model.base_rates + model.matrix @ w
        assert r.max() <= 30
        y = rng.poisson(r)
        prod = 1.0
        for yi, ri in zip(y, r):
            prod *= ri ** int(yi) * math.exp(-ri) / math.factorial(int(yi))
        ll_err = max(ll_err, abs(heldout_loglik(y, model, w, "poisson_ml") - math.log(prod)))
    ok = mass_err <= 1e-9 and ll_err <= 1e-10
    return _record(14, ok, f"max |mass - 1| {mass_err:.1e} (<= 1e-9); held-out log-likelihood vs "
                           f"direct PMF product {ll_err:.1e} (<= 1e-10)")


# --- 15: determinism ---------------------------------------------------------------

_SMALL = {"trials": 2, "n_list": [30], "s_list": [10.0]}
_SMALL_OVERRIDES = {
    "lambda-h-scaling": {"p": 50},
    "tightness": {"p": 40, "matrix_spec": [{"kind": "uniform01"}]},
    "gauss-vs-poisson": {"p": 40},
    "support-vs-n": {"p": 40, "k_list": [4]},
    "support-vs-k": {"p": 40, "k_list": [2, 4]},
    "roc": {"p": 40, "k_list": [4]},
    "bounds-report": {"p": 30, "n_list": [200], "trials": 1},
    "bernstein-check": {"n_list": [12], "s_list": [1e-6], "trials": 50},
}


def criterion_15():
    t0 = time.perf_counter()
    mismatched = []
    for name in sorted(REGISTRY):
        doc = {"experiment": name, **_SMALL, **_SMALL_OVERRIDES[name]}
        outs = []
        for rep, workers in ((0, 1), (1, 1), (2, 2)):
            m = run_experiment({"schema_version": 1, "output_dir": str(_WORK / "det" / f"{name}{rep}"),
                                **doc}, workers=workers)
            outs.append((Path(m["trials_csv"]).read_bytes(), Path(m["aggregate_csv"]).read_bytes()))
        if not outs[0] == outs[1] == outs[2]:
            mismatched.append(name)
    elapsed = time.perf_counter() - t0
    return _record(15, not mismatched,
                   f"{len(REGISTRY)} experiments rerun (1, 1 and 2 workers); byte mismatches: "
                   f"{mismatched or 'none'}; {elapsed:.1f}s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12,
            criterion_13, criterion_14, criterion_15]


@pytest.fixture(scope="module", autouse=True)
def _workdir():
    yield
    shutil.rmtree(_WORK, ignore_errors=True)


@pytest.mark.slow
@pytest.mark.parametrize("check", CRITERIA, ids=lambda f: f.__name__)
def test_acceptance(check):
    assert check(), RESULTS.get(int(check.__name__.split("_")[1]))


if __name__ == "__main__":
    try:
        passed = [check() for check in CRITERIA]
    finally:
        shutil.rmtree(_WORK, ignore_errors=True)
    print(f"{sum(passed)}/{len(passed)} criteria pass")
    sys.exit(0 if all(passed) else 1)
