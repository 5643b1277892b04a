"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 infeasible regime or
domain error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from .bounds import BoundInputs, BoundReport, bound_report, fano_lower_bound
from .exceptions import (
    BoundConditionWarning,
    ConfigurationError,
    ConstructionError,
    ContractViolation,
    DomainError,
    InfeasibleRegimeError,
)
from .experiments import ExperimentConfig, list_experiments, run_experiment
from .model import AffineRateModel, harmonic_mean, load_vector_csv, rate_summary
from .sensing import estimate_re
from .solver import ConstraintSet, SolverConfig, minimize, threshold_support

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4


class InputFileError(Exception):
    """A file could not be read or does not have the expected structure."""


def _load_model(path) -> AffineRateModel:
    try:
        return AffineRateModel.from_json(path)
    except (OSError, ValueError, TypeError) as exc:
        raise InputFileError(f"cannot read model {path}: {exc}") from None


def _load_vector(path, what) -> np.ndarray:
    try:
        return load_vector_csv(path)
    except (OSError, ValueError) as exc:
        raise InputFileError(f"cannot read {what} {path}: {exc}") from None


def _cmd_list(args) -> int:
    for entry in list_experiments():
        print(f"{entry['name']}: {entry['description']}")
        print(f"  required: {', '.join(entry['required'])}")
        defaults = ", ".join(f"{k}={json.dumps(v)}" for k, v in entry["defaults"].items())
        print(f"  defaults: {defaults}")
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputFileError(f"cannot read config {args.config}: {exc}") from None
    if args.output_dir:
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        doc = {**doc, "output_dir": args.output_dir}
    manifest = run_experiment(ExperimentConfig.from_dict(doc), workers=args.workers)
    for key in ("trials_csv", "aggregate_csv", "summary_json"):
        print(f"{key}: {manifest[key]}")
    errors = manifest["summary"]["errors"]
    if errors:
        print(f"{len(errors)} trial(s) recorded errors; see summary.json", file=sys.stderr)
    return EXIT_OK


_REPORT_KEYS = ("kappa", "tau", "nu_n", "delta", "theorem1_value", "fano_value")


def _print_report(report: BoundReport, extra: dict) -> None:
    doc = report.to_dict()
    for key in _REPORT_KEYS:
        val = doc[key]
        print(f"{key}: {'absent' if val is None else repr(float(val))}")
    for key, val in extra.items():
        print(f"{key}: {val}")
    for msg in report.warnings:
        print(f"warning: {msg}")


def _cmd_bounds(args) -> int:
    model = _load_model(args.model)
    if args.w is not None:
        w = _load_vector(args.w, "signal")
        summary = rate_summary(model, w)
        lam_min, lam_max, lam_h = summary.lambda_min, summary.lambda_max, summary.lambda_harmonic
    else:
        # without a signal, use the base rates: lambda_min and lambda_h can only grow with w
        base = model.base_rates
        if np.any(base <= 0):
            raise DomainError("base rates must be positive when no signal is given")
        lam_min, lam_h = float(base.min()), harmonic_mean(base)
        lam_max = float(base.max() + model.matrix.max() * args.s)
    extra = {}
    gamma = args.gamma_k
    if gamma is None:
        gamma = estimate_re(model.matrix, args.k, trials=args.re_trials, seed=args.seed).gamma_hat
        extra["gamma_k_estimate"] = repr(gamma)
    if not gamma > 0:
        raise InfeasibleRegimeError(f"gamma_k must be positive, got {gamma}")
    inp = BoundInputs(lam_min, lam_max, lam_h, float(model.matrix.max()), gamma, args.k,
                      model.n, args.zeta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundConditionWarning)
        fano = None
        if args.fano:
            fano, diag = fano_lower_bound(model, args.s, args.k, c=args.c, seed=args.seed)
            extra.update({(k if k.startswith("fano") else f"fano_{k}"): v for k, v in diag.items()})
        report = bound_report(inp, fano)
    if args.json:
        print(json.dumps({**report.to_dict(), **extra}, indent=2, sort_keys=True))
    else:
        _print_report(report, extra)
    return EXIT_OK


def _cmd_solve(args) -> int:
    model = _load_model(args.model)
    y = _load_vector(args.y, "observations")
    config = SolverConfig(obj_tol=args.obj_tol, step_tol=args.step_tol, max_iters=args.max_iters)
    res = minimize(args.loss, model, y, ConstraintSet(args.s, args.mode), config)
    w = res.w_hat.values
    text = "\n".join(repr(float(v)) for v in w) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise InputFileError(f"cannot write {args.out}: {exc}") from None
    else:
        sys.stdout.write(text)
    print(f"objective: {res.objective!r}", file=sys.stderr)
    print(f"iterations: {res.iterations}", file=sys.stderr)
    print(f"termination: {res.termination_reason.value}", file=sys.stderr)
    if args.threshold is not None:
        support = threshold_support(w, args.threshold)
        print(f"support: {' '.join(str(i) for i in support)}", file=sys.stderr)
    return EXIT_OK


def _positive(kind):
    def parse(text):
        val = kind(text)
        if not val > 0 or (kind is float and not math.isfinite(val)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisson-sparse",
        description="Sparse recovery from Poisson counts: experiments, bounds and solves.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=_positive(int), default=None,
                   help="worker processes (default: POISSON_SPARSE_THREADS or CPU count)")
    p.add_argument("--output-dir", default=None, help="override output_dir from the config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("list", help="list registered experiments")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("bounds", help="evaluate the error bounds for a model")
    p.add_argument("model", help="JSON model {\"base_rates\": [...], \"matrix\": [[...]]}")
    p.add_argument("--k", type=_positive(int), required=True)
    p.add_argument("--s", type=_positive(float), required=True)
    p.add_argument("--zeta", type=float, default=0.1)
    p.add_argument("--gamma-k", type=_positive(float), default=None,
                   help="restricted eigenvalue; estimated from the matrix when omitted")
    p.add_argument("--w", default=None, help="CSV ground-truth signal for the rate statistics")
    p.add_argument("--fano", action="store_true", help="also evaluate the minimax lower bound")
    p.add_argument("--c", type=float, default=34.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--re-trials", type=_positive(int), default=1000)
    p.add_argument("--json", action="store_true", help="print JSON instead of key: value lines")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("solve", help="fit one estimate")
    p.add_argument("model")
    p.add_argument("y", help="CSV of counts, one per model row")
    p.add_argument("--loss", choices=("poisson", "rlasso", "ls"), default="poisson")
    p.add_argument("--s", type=_positive(float), required=True)
    p.add_argument("--mode", choices=("le", "eq"), default="le")
    p.add_argument("--obj-tol", type=_positive(float), default=1e-10)
    p.add_argument("--step-tol", type=_positive(float), default=1e-10)
    p.add_argument("--max-iters", type=_positive(int), default=50000)
    p.add_argument("--threshold", type=float, default=None,
                   help="also report the support above this threshold")
    p.add_argument("--out", default=None, help="write the estimate here instead of stdout")
    p.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, InfeasibleRegimeError, ContractViolation, ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
