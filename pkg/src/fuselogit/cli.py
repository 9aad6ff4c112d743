"""Command-line interface: fit, cv, metrics, simulate, path, and penalty-grid.

Structured results are written as JSON, tabular data as CSV; everything goes
to ``--out`` (or standard output when omitted).  Exit codes: 0 on success, 2
on user error (bad flags, unreadable files), 3 when a requested fit failed
and ``--strict`` was given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .bcd import BcdSettings
from .exceptions import FuselogitError
from .likelihood import fit_ml
from .metrics import evaluate
from .penalty import PenaltyConfig, build_weights, penalty_surface_grid
from .pirls import PirlsSettings
from .schema import CoefVector, load_dataset_csv, load_schema_json
from .simulation import CvPlan, get_design, run_study
from .tuning import cv_fusion_only, cv_two_step, find_lambda_max, fit_path, fit_penalized


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _dump_json(payload: dict, out: str | None) -> None:
    _write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False), out)


def _load_inputs(args):
    schema = load_schema_json(args.schema)
    data = load_dataset_csv(args.data, schema, response=args.response)
    return schema, data


def _settings_for(solver: str, start: str | None):
    if solver == "pirls":
        return PirlsSettings(start=start) if start else PirlsSettings()
    return BcdSettings(start=start) if start else BcdSettings()


def _weights_or_fail(data, cfg):
    """Build the weight set; adaptive schemes need a successful ML fit."""
    if cfg.weight_scheme == "plain":
        return build_weights(data, cfg), None
    ml = fit_ml(data)
    if ml.failed:
        return None, f"adaptive weights unavailable: ML fit failed ({ml.reason})"
    return build_weights(data, cfg, ml_estimate=ml.beta), None


def _add_data_args(parser):
    parser.add_argument("--data", required=True, help="dataset CSV")
    parser.add_argument("--schema", required=True, help="schema JSON sidecar")
    parser.add_argument("--response", default="y", help="response column name")


def _cmd_fit(args) -> int:
    _, data = _load_inputs(args)
    cfg = PenaltyConfig(lambda1=args.lambda1, lambda0=args.lambda0,
                        weight_scheme=args.weights)
    weights, problem = _weights_or_fail(data, cfg)
    if weights is None:
        print(problem, file=sys.stderr)
        return 3
    settings = _settings_for(args.solver, args.start)
    result = fit_penalized(data, cfg, weights, solver=args.solver, settings=settings)
    _dump_json(result.to_jsonable(), args.out)
    if result.failed and args.strict:
        return 3
    return 0


def _cmd_cv(args) -> int:
    _, data = _load_inputs(args)
    cfg = PenaltyConfig(lambda1=0.0, lambda0=0.0, weight_scheme=args.weights)
    weights, problem = _weights_or_fail(data, cfg)
    if weights is None:
        print(problem, file=sys.stderr)
        return 3
    plan = CvPlan(k_folds=args.folds, n_lambda=args.nlambda, seed=args.seed)
    settings = _settings_for(args.solver, None)
    runner = cv_fusion_only if args.fusion_only else cv_two_step
    result = runner(data, args.solver, weights, plan, settings=settings,
                    cfg_template=cfg)
    _dump_json(result.to_jsonable(), args.out)
    if result.fit.failed and args.strict:
        return 3
    return 0


def _cmd_metrics(args) -> int:
    schema = load_schema_json(args.schema)
    with open(args.truth) as fh:
        truth = CoefVector.from_jsonable(json.load(fh))
    with open(args.estimate) as fh:
        payload = json.load(fh)
    estimate = CoefVector.from_jsonable(payload.get("beta", payload))
    report = evaluate(estimate, truth, schema)
    _dump_json(report.to_jsonable(), args.out)
    return 0


def _cmd_simulate(args) -> int:
    spec = get_design(args.design, n=args.n, seed=args.seed, replications=args.reps)
    plan = CvPlan(k_folds=args.folds, n_lambda=args.nlambda, seed=args.seed)
    report = run_study(spec, args.methods, plan, jobs=args.jobs)
    _dump_json(report.to_jsonable(), args.out)
    if args.csv:
        fields = list(report.records[0].keys()) if report.records else []
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(report.records)
    return 0


def _cmd_path(args) -> int:
    schema, data = _load_inputs(args)
    cfg = PenaltyConfig(lambda1=0.0, lambda0=0.0, weight_scheme=args.weights)
    weights, problem = _weights_or_fail(data, cfg)
    if weights is None:
        print(problem, file=sys.stderr)
        return 3
    settings = _settings_for(args.solver, None)
    l1_max = args.lambda1_max
    l0_max = args.lambda0_max
    if l1_max is None:
        l1_max = find_lambda_max(data, args.solver, weights, which="gl", settings=settings)
    if l0_max is None and args.with_fusion:
        l0_max = find_lambda_max(data, args.solver, weights, which="l0", settings=settings)
    l0_max = l0_max or 0.0
    fractions = np.linspace(0.0, 1.0, args.nlambda)
    fits = fit_path(data, args.solver, weights, fractions * l1_max, fractions * l0_max,
                    settings=settings)
    driving = fractions * (l1_max if l1_max > 0 else l0_max)
    lines = [",".join(["lambda"] + schema.column_names())]
    for lam, fit in zip(driving, fits):
        coefs = fit.beta.flatten()
        lines.append(",".join([repr(float(lam))] + [repr(float(v)) for v in coefs]))
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_penalty_grid(args) -> int:
    grid = np.arange(args.low, args.high + args.step / 2, args.step)
    surface = penalty_surface_grid(grid, grid, lambda1=args.lambda1, lambda0=args.lambda0)
    lines = ["beta1,beta2,penalty"]
    for i, b1 in enumerate(grid):
        for k, b2 in enumerate(grid):
            lines.append(f"{float(b1)!r},{float(b2)!r},{float(surface[i, k])!r}")
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselogit",
        description="Penalized logistic regression with factor selection and level fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit at fixed penalty strengths")
    _add_data_args(p_fit)
    p_fit.add_argument("--solver", choices=("pirls", "bcd"), default="pirls")
    p_fit.add_argument("--lambda1", type=float, default=0.0)
    p_fit.add_argument("--lambda0", type=float, default=0.0)
    p_fit.add_argument("--weights", choices=("plain", "adaptive"), default="plain")
    p_fit.add_argument("--start", choices=("zero", "ml"), default=None)
    p_fit.add_argument("--out", default=None)
    p_fit.add_argument("--strict", action="store_true",
                       help="exit 3 when the fit reports failure")
    p_fit.set_defaults(func=_cmd_fit)

    p_cv = sub.add_parser("cv", help="two-step cross-validation of (lambda1, lambda0)")
    _add_data_args(p_cv)
    p_cv.add_argument("--solver", choices=("pirls", "bcd"), default="pirls")
    p_cv.add_argument("--weights", choices=("plain", "adaptive"), default="plain")
    p_cv.add_argument("--folds", type=int, default=5)
    p_cv.add_argument("--nlambda", type=int, default=10)
    p_cv.add_argument("--seed", type=int, required=True)
    p_cv.add_argument("--fusion-only", action="store_true",
                      help="tune lambda0 only, with no group penalty")
    p_cv.add_argument("--out", default=None)
    p_cv.add_argument("--strict", action="store_true")
    p_cv.set_defaults(func=_cmd_cv)

    p_metrics = sub.add_parser("metrics", help="evaluate an estimate against a truth")
    p_metrics.add_argument("--truth", required=True, help="truth coefficient JSON")
    p_metrics.add_argument("--estimate", required=True, help="fit result or coefficient JSON")
    p_metrics.add_argument("--schema", required=True)
    p_metrics.add_argument("--out", default=None)
    p_metrics.set_defaults(func=_cmd_metrics)

    p_sim = sub.add_parser("simulate", help="run a Monte-Carlo study on a built-in design")
    p_sim.add_argument("--design", choices=("b8", "highdim"), required=True)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--reps", type=int, default=50)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--methods", nargs="+", default=["ml"],
                       help="e.g. ml l0_fgl_pirls.adaptive l0_fgl_bcd")
    p_sim.add_argument("--folds", type=int, default=5)
    p_sim.add_argument("--nlambda", type=int, default=10)
    p_sim.add_argument("--jobs", type=int, default=os.cpu_count())
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--csv", default=None, help="also write per-replication records CSV")
    p_sim.set_defaults(func=_cmd_simulate)

    p_path = sub.add_parser("path", help="coefficient path along a penalty grid")
    _add_data_args(p_path)
    p_path.add_argument("--solver", choices=("pirls", "bcd"), default="pirls")
    p_path.add_argument("--weights", choices=("plain", "adaptive"), default="plain")
    p_path.add_argument("--nlambda", type=int, default=20)
    p_path.add_argument("--lambda1-max", type=float, default=None, dest="lambda1_max")
    p_path.add_argument("--lambda0-max", type=float, default=None, dest="lambda0_max")
    p_path.add_argument("--with-fusion", action="store_true",
                        help="scale lambda0 along the path as well")
    p_path.add_argument("--out", default=None)
    p_path.set_defaults(func=_cmd_path)

    p_grid = sub.add_parser("penalty-grid",
                            help="CSV of the selection+fusion penalty surface")
    p_grid.add_argument("--low", type=float, default=-2.0)
    p_grid.add_argument("--high", type=float, default=2.0)
    p_grid.add_argument("--step", type=float, default=0.1)
    p_grid.add_argument("--lambda1", type=float, default=1.0)
    p_grid.add_argument("--lambda0", type=float, default=1.0)
    p_grid.add_argument("--out", default=None)
    p_grid.set_defaults(func=_cmd_penalty_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FuselogitError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
