"""Config-driven Monte Carlo harness for the synthetic studies.

Each registered experiment expands its config into a grid of cells, runs
``trials`` independent trials per cell and writes three artifacts to
``output_dir``:

``trials.csv``
    one row per (cell, trial, estimator[, threshold]), sorted by cell and trial;
``aggregate.csv``
    mean and standard error of every metric per group;
``summary.json``
    the resolved config, per-group highlights and any per-cell errors.

Trial ``t`` of cell ``c`` draws everything from streams keyed by
``(master_seed, c, t)``, so results do not depend on the worker count or on
execution order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    BoundInputs,
    bernstein_radius,
    bound_report,
    fano_lower_bound,
    theorem1_bound,
)
from .estimators import ESTIMATORS
from .exceptions import BoundConditionWarning, ConfigurationError, PoissonSparseError
from .metrics import (
    heldout_loglik,
    roc_auc,
    ROCPoint,
    standard_error,
    support_metrics,
)
from .model import AffineRateModel, rate_summary
from .rng import derive_seed, make_rng
from .sensing import MatrixSpec, estimate_re, generate_matrix
from .simulate import sparse_direction

SCHEMA_VERSION = 1
THREADS_ENV = "POISSON_SPARSE_THREADS"

# stream tags below the cell index keep matrix/signal/noise draws independent
_MATRIX, _SIGNAL, _NOISE, _HELDOUT, _RE = range(5)
_FIXED = 2**31  # cell slot used by draws shared across cells


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    schema_version: int = SCHEMA_VERSION
    p: int = 400
    k_list: tuple = (5,)
    n_list: tuple = (100,)
    s_list: tuple = (10.0,)
    lambda0: tuple = (1.0,)
    matrix_spec: tuple = ({"kind": "uniform01"},)
    estimators: tuple = ("PoissonML",)
    constraint_mode: str = "le"
    thresholds: tuple = (1e-4,)
    trials: int = 10
    master_seed: int = 0
    output_dir: str = ""
    fix_matrix: bool = False
    zeta: float = 0.1
    re_trials: int = 200
    warm_start_ls: bool = False
    fano_c: float = 34.0
    fano_sample_constant: float = 1.0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in REGISTRY:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; registry: {', '.join(REGISTRY)}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"schema_version {self.schema_version} is not supported (expected {SCHEMA_VERSION})")
        if int(self.trials) < 1:
            raise ConfigurationError("trials must be >= 1")
        for name in ("k_list", "n_list", "s_list", "lambda0", "matrix_spec", "estimators",
                     "thresholds"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"{name} must be non-empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigurationError(
                f"unknown estimators {sorted(unknown)}; choose from {sorted(ESTIMATORS)}")
        if any(int(k) < 1 or int(k) > int(self.p) for k in self.k_list):
            raise ConfigurationError("every k must lie in [1, p]")
        if any(int(n) < 1 for n in self.n_list):
            raise ConfigurationError("every n must be >= 1")
        if any(not float(s) > 0 for s in self.s_list):
            raise ConfigurationError("every s must be > 0")
        if any(not float(l) >= 0 for l in self.lambda0):
            raise ConfigurationError("lambda0 values must be >= 0")
        if any(float(t) < 0 for t in self.thresholds):
            raise ConfigurationError("thresholds must be >= 0")
        if not 0 < self.zeta < 1:
            raise ConfigurationError("zeta must lie in (0, 1)")
        unknown = set(self.solver) - {"obj_tol", "step_tol", "max_iters", "step_rule"}
        if unknown:
            raise ConfigurationError(f"unknown solver keys: {sorted(unknown)}")
        for doc in self.matrix_spec:
            if set(doc) & {"n", "p", "seed"}:
                raise ConfigurationError("matrix_spec must not set n, p or seed")
            MatrixSpec.from_dict({**doc, "n": 1, "p": 1})

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        if "experiment" not in doc:
            raise ConfigurationError("config needs an 'experiment' key")
        name = doc["experiment"]
        if name not in REGISTRY:
            raise ConfigurationError(f"unknown experiment {name!r}; registry: {', '.join(REGISTRY)}")
        if "schema_version" not in doc:
            raise ConfigurationError("config needs a 'schema_version' key")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        merged = {**REGISTRY[name].defaults, **doc}
        for key in ("k_list", "n_list", "s_list", "lambda0", "estimators", "thresholds",
                    "matrix_spec"):
            val = merged.get(key)
            if val is not None and not isinstance(val, (list, tuple)):
                val = [val]
            if val is not None:
                merged[key] = tuple(val)
        if not merged.get("output_dir"):
            merged["output_dir"] = os.path.join("results", name)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, val in doc.items():
            if isinstance(val, tuple):
                doc[key] = list(val)
        return doc


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    grid: tuple  # config fields swept, in cell order
    trial: object
    defaults: dict
    group_extra: tuple = ()


# --- trial helpers ---------------------------------------------------------


def _matrix(cfg, cell, cell_idx, trial, spec_doc):
    if cfg.fix_matrix:
        seed = derive_seed(cfg.master_seed, _FIXED, _MATRIX, cell["n"], cell["matrix_idx"])
    else:
        seed = derive_seed(cfg.master_seed, cell_idx, trial, _MATRIX)
    spec = MatrixSpec.from_dict({**spec_doc, "n": cell["n"], "p": cfg.p, "seed": seed})
    return generate_matrix(spec), seed


def _signal(cfg, k, s, rng_key):
    rng = make_rng(cfg.master_seed, *rng_key)
    return s * sparse_direction(cfg.p, k, rng)


def _fit(cfg, name, A, y, lambda0, s):
    kwargs = dict(amplitude=s, mode=cfg.constraint_mode, base_rates=lambda0, **cfg.solver)
    if name == "RescaledLASSO":
        kwargs["warm_start_ls"] = cfg.warm_start_ls
    return ESTIMATORS[name](**kwargs).fit(A, y)


_RE_CACHE: dict = {}


def _gamma(cfg, A, matrix_seed, k):
    key = (matrix_seed, A.shape, k, cfg.re_trials, cfg.master_seed)
    if key not in _RE_CACHE:
        seed = derive_seed(cfg.master_seed, _FIXED, _RE, matrix_seed % (2**62), k)
        _RE_CACHE[key] = estimate_re(A, k, trials=cfg.re_trials, seed=seed).gamma_hat
    return _RE_CACHE[key]


def _instance(cfg, cell, cell_idx, trial, signal_key=None):
    spec_doc = cfg.matrix_spec[cell["matrix_idx"]]
    A, mseed = _matrix(cfg, cell, cell_idx, trial, spec_doc)
    key = signal_key if signal_key is not None else (cell_idx, trial, _SIGNAL)
    w = _signal(cfg, cell["k"], cell["s"], key)
    model = AffineRateModel.constant(cell["lambda0"], A)
    y = make_rng(cfg.master_seed, cell_idx, trial, _NOISE).poisson(model.base_rates + A @ w)
    return A, mseed, w, model, y


def _base_row(cell, trial, seed, cfg):
    return {
        "cell": cell["cell"], "trial": trial, "seed": seed,
        "matrix": cfg.matrix_spec[cell["matrix_idx"]]["kind"],
        "n": cell["n"], "p": cfg.p, "k": cell["k"], "s": cell["s"], "lambda0": cell["lambda0"],
    }


# --- experiments -----------------------------------------------------------


def _trial_lambda_h(cfg, cell, cell_idx, trial):
    A, mseed, w, model, _ = _instance(cfg, cell, cell_idx, trial)
    summary = rate_summary(model, w)
    row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
    row.update(estimator="", lambda_h=summary.lambda_harmonic, lambda_min=summary.lambda_min,
               lambda_max=summary.lambda_max)
    return [row]


def _trial_tightness(cfg, cell, cell_idx, trial):
    # one direction per k, scaled over s; repeats differ only in the Poisson draws
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial,
                                      signal_key=(_FIXED, _SIGNAL, cell["k"]))
    summary = rate_summary(model, w)
    x = cell["s"] / math.sqrt(cell["n"] * summary.lambda_harmonic)
    gamma = _gamma(cfg, A, mseed, cell["k"])
    bound = math.nan
    if gamma > 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundConditionWarning)
            bound = theorem1_bound(BoundInputs.from_summary(summary, gamma, cell["k"], cell["n"],
                                                            cfg.zeta))
    rows = []
    for name in cfg.estimators:
        est = _fit(cfg, name, A, y, cell["lambda0"], cell["s"])
        m = support_metrics(est.coef_, w, cfg.thresholds[0])
        row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
        row.update(estimator=name, lambda_h=summary.lambda_harmonic, s_over_sqrt_n_lambda_h=x,
                   l2_error=m.l2_error, gamma_hat=gamma, theorem1_bound=bound,
                   bound_holds=int(m.l2_error <= bound), converged=int(est.converged_))
        rows.append(row)
    return rows


def _trial_gauss_vs_poisson(cfg, cell, cell_idx, trial):
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial)
    # held-out rows from the same design law
    hold_spec = {**cfg.matrix_spec[cell["matrix_idx"]], "n": cell["n"], "p": cfg.p,
                 "seed": derive_seed(cfg.master_seed, cell_idx, trial, _HELDOUT)}
    A_test = generate_matrix(MatrixSpec.from_dict(hold_spec))
    model_test = AffineRateModel.constant(cell["lambda0"], A_test)
    y_test = make_rng(cfg.master_seed, cell_idx, trial, _HELDOUT).poisson(
        model_test.base_rates + A_test @ w)
    rows = []
    for name in cfg.estimators:
        est = _fit(cfg, name, A, y, cell["lambda0"], cell["s"])
        family = "poisson_ml" if name == "PoissonML" else "discretized_gaussian"
        try:
            ll = heldout_loglik(y_test, model_test, est.coef_, family)
        except PoissonSparseError:
            ll = math.nan
        row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
        row.update(estimator=name, l2_error=float(np.linalg.norm(est.coef_ - w)),
                   heldout_loglik=ll, converged=int(est.converged_))
        rows.append(row)
    return rows


def _threshold(cfg, t, k):
    return float(t) / k if cfg.experiment in RELATIVE_THRESHOLDS else float(t)


def _trial_support(cfg, cell, cell_idx, trial):
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial)
    t = _threshold(cfg, cfg.thresholds[0], cell["k"])
    rows = []
    for name in cfg.estimators:
        est = _fit(cfg, name, A, y, cell["lambda0"], cell["s"])
        m = support_metrics(est.coef_, w, t)
        row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
        row.update(estimator=name, threshold=t, l2_error=m.l2_error,
                   success=int(m.support_success), detections=m.detections,
                   false_alarms=m.false_alarms, converged=int(est.converged_))
        rows.append(row)
    return rows


def _trial_roc(cfg, cell, cell_idx, trial):
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial)
    k, p = cell["k"], cfg.p
    rows = []
    for name in cfg.estimators:
        est = _fit(cfg, name, A, y, cell["lambda0"], cell["s"])
        for t in cfg.thresholds:
            t = _threshold(cfg, t, k)
            m = support_metrics(est.coef_, w, t)
            row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
            row.update(estimator=name, threshold=t, l2_error=m.l2_error,
                       success=int(m.support_success), detections=m.detections,
                       false_alarms=m.false_alarms, pd=m.detections / k,
                       pf=m.false_alarms / max(p - k, 1))
            rows.append(row)
    return rows


def _trial_bounds(cfg, cell, cell_idx, trial):
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial)
    summary = rate_summary(model, w)
    gamma = _gamma(cfg, A, mseed, cell["k"])
    row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
    row.update(estimator="", lambda_h=summary.lambda_harmonic, gamma_hat=gamma)
    try:
        inp = BoundInputs.from_summary(summary, gamma, cell["k"], cell["n"], cfg.zeta)
        rep = bound_report(inp)
        row.update(kappa=rep.kappa, tau=rep.tau, nu_n=rep.nu_n, delta=rep.delta,
                   theorem1_value=rep.theorem1_value, zeta_ok=int(not rep.warnings),
                   theorem1_error="")
    except PoissonSparseError as exc:
        row.update(kappa=math.nan, tau=math.nan, nu_n=math.nan, delta=math.nan,
                   theorem1_value=math.nan, zeta_ok=0, theorem1_error=str(exc))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundConditionWarning)
            fano, diag = fano_lower_bound(model, cell["s"], cell["k"], c=cfg.fano_c,
                                          seed=derive_seed(cfg.master_seed, cell_idx, trial),
                                          sample_constant=cfg.fano_sample_constant)
        row.update(fano_value=fano, fano_I=diag["I"], fano_ratio=diag["fano_ratio"],
                   fano_M=diag["codebook_size"], fano_error="")
    except PoissonSparseError as exc:
        row.update(fano_value=math.nan, fano_I=math.nan, fano_ratio=math.nan, fano_M=0,
                   fano_error=str(exc))
    return [row]


def _trial_bernstein(cfg, cell, cell_idx, trial):
    A, mseed, w, model, y = _instance(cfg, cell, cell_idx, trial)
    summary = rate_summary(model, w)
    r = summary.rates
    radius = bernstein_radius(cell["n"], summary.lambda_harmonic, cfg.zeta)
    stat = float(np.abs(y / r - 1.0).mean())
    row = _base_row(cell, trial, derive_seed(cfg.master_seed, cell_idx, trial), cfg)
    row.update(estimator="", lambda_h=summary.lambda_harmonic, statistic=stat, radius=radius,
               covered=int(stat <= radius))
    return [row]


_SUPPORT_DEFAULTS = dict(p=400, k_list=[40], lambda0=[100.0], s_list=[1.0],
                         estimators=["PoissonML", "RescaledLASSO"], thresholds=[1e-4],
                         matrix_spec=[{"kind": "altdist"}], fix_matrix=True, trials=100)

# experiments whose thresholds are given in units of 1/k
RELATIVE_THRESHOLDS = ("support-vs-k", "roc")

REGISTRY = {
    "lambda-h-scaling": Experiment(
        "lambda-h-scaling", "harmonic rate mean vs signal amplitude",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_lambda_h,
        dict(p=400, k_list=[5], n_list=[100], s_list=[10.0, 100.0, 1000.0, 10000.0],
             lambda0=[1.0], matrix_spec=[{"kind": "uniform01"}, {"kind": "beta"},
                                         {"kind": "altdist"}], trials=50)),
    "tightness": Experiment(
        "tightness", "l2 error vs s/sqrt(n lambda_h) and vs sqrt(k), with the error bound",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_tightness,
        dict(p=400, k_list=[5], n_list=[100, 200, 300],
             s_list=[1.0, 10.0, 100.0, 1000.0, 20000.0], lambda0=[4.0],
             matrix_spec=[{"kind": "uniform01"}, {"kind": "altdist"}], fix_matrix=True,
             trials=10)),
    "gauss-vs-poisson": Experiment(
        "gauss-vs-poisson", "Poisson vs Gaussian ML over s and lambda0 sweeps",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_gauss_vs_poisson,
        dict(p=400, k_list=[5], n_list=[100], s_list=[1.0, 10.0, 100.0, 1000.0],
             lambda0=[0.01], matrix_spec=[{"kind": "beta", "alpha": 1.0, "beta": 3.0}],
             estimators=["PoissonML", "GaussianML"], trials=100)),
    "support-vs-n": Experiment(
        "support-vs-n", "support recovery probability vs n (threshold t absolute)",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_support,
        dict(_SUPPORT_DEFAULTS, n_list=[2, 50, 100, 200, 300, 400])),
    "support-vs-k": Experiment(
        "support-vs-k", "support recovery probability vs k (threshold is thresholds[0] / k)",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_support,
        dict(_SUPPORT_DEFAULTS, p=200, n_list=[100], k_list=[1, 2, 5, 10, 20, 40],
             thresholds=[0.01])),
    "roc": Experiment(
        "roc", "detection vs false-alarm rate over thresholds (each threshold divided by k)",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_roc,
        dict(_SUPPORT_DEFAULTS, p=200, k_list=[20], n_list=[100],
             thresholds=[float(v) for v in np.geomspace(1.0, 1e-3, 13)]),
        group_extra=("threshold",)),
    "bounds-report": Experiment(
        "bounds-report", "error upper bound and minimax lower bound per instance",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_bounds,
        dict(p=400, k_list=[9], n_list=[100, 1000], s_list=[100.0], lambda0=[1.0], trials=1)),
    "bernstein-check": Experiment(
        "bernstein-check", "coverage of the relative-deviation concentration radius",
        ("matrix_idx", "n", "k", "s", "lambda0"), _trial_bernstein,
        dict(p=10, k_list=[1], n_list=[12], s_list=[1e-6], lambda0=[5.0, 50.0, 500.0],
             trials=1000)),
}


def list_experiments() -> list:
    """Registry entries in a stable order, with the config keys each one reads."""
    out = []
    for name in sorted(REGISTRY):
        exp = REGISTRY[name]
        out.append({
            "name": name,
            "description": exp.description,
            "required": ["experiment", "schema_version"],
            "defaults": exp.defaults,
        })
    return out


# --- running ---------------------------------------------------------------


def _cells(cfg: ExperimentConfig) -> list:
    values = {
        "matrix_idx": range(len(cfg.matrix_spec)),
        "n": [int(n) for n in cfg.n_list],
        "k": [int(k) for k in cfg.k_list],
        "s": [float(s) for s in cfg.s_list],
        "lambda0": [float(v) for v in cfg.lambda0],
    }
    grid = REGISTRY[cfg.experiment].grid
    cells = []
    for i, combo in enumerate(itertools.product(*(values[g] for g in grid))):
        cell = dict(zip(grid, combo))
        cell["cell"] = i
        cells.append(cell)
    return cells


def _run_task(args):
    cfg, cell, trial = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundConditionWarning)
        try:
            return cell["cell"], trial, REGISTRY[cfg.experiment].trial(cfg, cell, cell["cell"],
                                                                        trial), ""
        except PoissonSparseError as exc:
            return cell["cell"], trial, [], f"{type(exc).__name__}: {exc}"


def worker_count() -> int:
    """Pool size: ``POISSON_SPARSE_THREADS`` if set, capped by the CPU count."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return cpus
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1")
    return min(cap, cpus)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    Path(path).write_text(buf.getvalue())


def _columns(rows):
    cols = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


_KEY_COLUMNS = ("cell", "trial", "seed", "matrix", "n", "p", "k", "s", "lambda0", "estimator",
                "threshold")


def aggregate(rows, group_extra=()) -> list:
    """Mean and standard error of each numeric metric per (cell, estimator[, extra])."""
    groups: dict = {}
    for row in rows:
        key = (row["cell"], row["estimator"]) + tuple(row[g] for g in group_extra)
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) if isinstance(x, str) else x for x in k)):
        members = groups[key]
        first = members[0]
        agg = {c: first[c] for c in ("cell", "matrix", "n", "p", "k", "s", "lambda0", "estimator")}
        for g in group_extra:
            agg[g] = first[g]
        agg["count"] = len(members)
        for col in first:
            if col in _KEY_COLUMNS or col in group_extra:
                continue
            vals = [r[col] for r in members]
            if not all(isinstance(v, (int, float, np.integer, np.floating)) for v in vals):
                continue
            arr = np.asarray(vals, dtype=float)
            finite = arr[np.isfinite(arr)]
            agg[f"{col}_mean"] = float(finite.mean()) if finite.size else math.nan
            agg[f"{col}_se"] = standard_error(finite) if finite.size else math.nan
        out.append(agg)
    return out


def _highlights(cfg, agg_rows):
    if cfg.experiment != "roc":
        return {}
    auc = {}
    for name in cfg.estimators:
        for cell in sorted({r["cell"] for r in agg_rows}):
            pts = [ROCPoint(r["threshold"], r["pd_mean"], r["pf_mean"]) for r in agg_rows
                   if r["estimator"] == name and r["cell"] == cell]
            auc[f"{name}@cell{cell}"] = roc_auc(pts)
    return {"auc": auc}


def run_experiment(config, workers=None) -> dict:
    """Run a registered experiment and write its artifacts.

    Parameters
    ----------
    config : ExperimentConfig or dict
    workers : int, optional
        Worker processes; defaults to :func:`worker_count`.

    Returns
    -------
    dict
        Paths of ``trials_csv``, ``aggregate_csv`` and ``summary_json`` plus the
        ``summary`` document itself.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    workers = worker_count() if workers is None else max(1, int(workers))
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    cells = _cells(cfg)
    tasks = [(cfg, cell, t) for cell in cells for t in range(int(cfg.trials))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    rows = [row for _, _, trial_rows, _ in results for row in trial_rows]
    errors = [{"cell": c, "trial": t, "error": e} for c, t, _, e in results if e]
    exp = REGISTRY[cfg.experiment]
    agg_rows = aggregate(rows, exp.group_extra)

    trials_csv = out_dir / "trials.csv"
    aggregate_csv = out_dir / "aggregate.csv"
    summary_json = out_dir / "summary.json"
    _write_csv(trials_csv, rows, _columns(rows) or list(_KEY_COLUMNS))
    _write_csv(aggregate_csv, agg_rows, _columns(agg_rows) or ["cell", "estimator", "count"])
    summary = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "cells": cells,
        "n_rows": len(rows),
        "errors": errors,
        **_highlights(cfg, agg_rows),
    }
    summary_json.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_fmt) + "\n")
    return {
        "trials_csv": str(trials_csv),
        "aggregate_csv": str(aggregate_csv),
        "summary_json": str(summary_json),
        "summary": summary,
    }
