"""Command-line interface: simulate, select, fit, benchmark.

File formats are deliberately plain: X, Y, and coefficient matrices are
headerless numeric CSV (rows = observations or covariates), the group
layout is a small JSON object with ``covariate_sizes`` and
``response_sizes`` lists, and benchmark configurations are JSON
renderings of SimulationSpec.  Every output file is written atomically
(temp file + rename), so an aborted run leaves no partial artifacts.

Exit codes: 0 on success, 2 for user/configuration errors (bad paths,
malformed files, dimension mismatches, invalid flag combinations), and
3 for numeric failures.
"""

import argparse
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .blocks import GroupSpec
from .estimators import baseline_fit, nbslasso_fit, unstandardize
from .blocks import ScreenPolicy, all_block_stats, indicator_from_gamma, \
    select_threshold, select_threshold_centered
from .linalg import standardize
from .simbench import (aggregate_table, atomic_write_text, generate,
                       load_spec_json, reports_to_csv, run_benchmark)


def _load_matrix(path, what):
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError:
        raise ValueError(f"cannot read {what} file: {path}")
    except ValueError as e:
        raise ValueError(f"malformed numeric CSV for {what} ({path}): {e}")
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{what} file contains non-finite values: {path}")
    return m


def _load_groups(path):
    try:
        with open(path) as f:
            d = json.load(f)
    except OSError:
        raise ValueError(f"cannot read group spec: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"group spec is not valid JSON ({path}): {e}")
    return GroupSpec.from_dict(d)


def _matrix_csv(m, fmt="%.17g"):
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(m), delimiter=",", fmt=fmt)
    return buf.getvalue()


def _write_matrix(path, m, fmt="%.17g"):
    atomic_write_text(path, _matrix_csv(m, fmt))


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load_xy(args):
    X = _load_matrix(args.x, "X")
    Y = _load_matrix(args.y, "Y")
    g = _load_groups(args.groups)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(
            f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    g.check_dims(X.shape[1], Y.shape[1])
    return X, Y, g


def cmd_simulate(args):
    spec = load_spec_json(args.config)
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    out = _out_dir(args)
    X, Y, X_test, Y_test, truth = generate(spec)
    _write_matrix(os.path.join(out, "x_train.csv"), X)
    _write_matrix(os.path.join(out, "y_train.csv"), Y)
    _write_matrix(os.path.join(out, "x_test.csv"), X_test)
    _write_matrix(os.path.join(out, "y_test.csv"), Y_test)
    _write_matrix(os.path.join(out, "b_true.csv"), truth.B_true)
    _write_matrix(os.path.join(out, "delta_true.csv"),
                  truth.delta_true.astype(int), fmt="%d")
    _write_json(os.path.join(out, "groups.json"), spec.groups().to_dict())
    _write_json(os.path.join(out, "spec.json"), spec.to_dict())
    print(f"simulated n={spec.n} train rows into {out}")
    return 0


def cmd_select(args):
    X, Y, g = _load_xy(args)
    Xs, _, _ = standardize(X)
    Ys, _, _ = standardize(Y)
    policy = ScreenPolicy(force=args.screen_force, seed=args.seed)
    grid = all_block_stats(Xs, Ys, g, screen=policy, threads=args.threads)
    if args.gamma is not None:
        ind = indicator_from_gamma(grid, args.gamma)
    elif args.selector == "plain":
        ind = select_threshold(grid, args.alpha)
    else:
        ind = select_threshold_centered(grid, args.alpha)
    out = _out_dir(args)
    r2bar = np.array([[s.r2bar for s in row] for row in grid])
    _write_matrix(os.path.join(out, "delta.csv"), ind.delta, fmt="%d")
    _write_matrix(os.path.join(out, "r2bar.csv"), r2bar)
    summary = {
        "c_hat": ind.c_hat,
        "gamma_hat": ind.gamma_hat,
        "alpha": ind.alpha,
        "n_active": ind.n_active,
        "selector": "gamma" if args.gamma is not None else args.selector,
    }
    if ind.n_active == 0:
        summary["note"] = "no block passed ER <= alpha"
    _write_json(os.path.join(out, "summary.json"), summary)
    print(f"selected {ind.n_active} of "
          f"{g.n_covariate_groups * g.n_response_groups} blocks -> {out}")
    return 0


def cmd_fit(args):
    X, Y, g = _load_xy(args)
    common = dict(lambda_mode=args.lambda_mode, m3=args.m3, folds=args.folds,
                  seed=args.seed, threads=args.threads)
    if args.mix is not None:
        common["mix"] = args.mix
    if args.method == "nbslasso":
        fit = nbslasso_fit(X, Y, g, alpha=args.alpha, gamma=args.gamma,
                           selector=args.selector,
                           screen=ScreenPolicy(force=args.screen_force,
                                               seed=args.seed),
                           **common)
    else:
        fit = baseline_fit(X, Y, g, method=args.method, **common)
    out = _out_dir(args)
    _write_matrix(os.path.join(out, "coefficients.csv"), fit.coefficients)
    _write_matrix(os.path.join(out, "delta.csv"), fit.indicator.delta, fmt="%d")
    lams = np.array([[np.nan if v is None else v for v in fit.lambda_used]])
    _write_matrix(os.path.join(out, "lambdas.csv"), lams)
    if args.unstandardized:
        raw, intercepts = unstandardize(fit.coefficients, fit.standardization)
        _write_matrix(os.path.join(out, "coefficients_raw.csv"), raw)
        _write_matrix(os.path.join(out, "intercepts.csv"), intercepts[None, :])
    summary = {
        "method": fit.method,
        "elapsed_seconds": fit.elapsed_seconds,
        "n_active_blocks": fit.indicator.n_active,
        "c_hat": None if not np.isfinite(fit.indicator.c_hat)
        else fit.indicator.c_hat,
        "seed": args.seed,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    print(f"fit method={fit.method} active_blocks={fit.indicator.n_active} "
          f"elapsed={fit.elapsed_seconds:.2f}s -> {out}")
    return 0


def cmd_benchmark(args):
    spec = load_spec_json(args.config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ValueError("no methods given")
    reports, agg = run_benchmark(spec, methods, args.replications,
                                 base_seed=args.seed, threads=args.threads)
    out = _out_dir(args)
    atomic_write_text(os.path.join(out, "replications.csv"),
                      reports_to_csv(reports))
    label = f"{spec.sparsity_level:g}%"
    table = aggregate_table(agg, sparsity_label=label)
    atomic_write_text(os.path.join(out, "aggregate.txt"), table)
    failures = [r for r in reports if r.error]
    sys.stdout.write(table)
    if failures:
        print(f"{len(failures)} replication/method cells failed; "
              "see replications.csv")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="blocksel",
        description="Block selection and two-step sparse estimation for "
                    "multi-response regression")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: BLOCKSEL_THREADS or "
                             "logical cores)")
        sp.add_argument("--out", required=True, help="output directory")

    def add_xy(sp):
        sp.add_argument("--x", required=True, help="X matrix CSV (headerless)")
        sp.add_argument("--y", required=True, help="Y matrix CSV (headerless)")
        sp.add_argument("--groups", required=True, help="group spec JSON")

    def add_selection(sp):
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--gamma", type=float, default=None,
                        help="fixed cutoff 1-gamma instead of the scan")
        sp.add_argument("--selector", choices=("centered", "plain"),
                        default="centered")
        sp.add_argument("--screen-force", action="store_true",
                        help="screen every block, not just wide ones")

    sp = sub.add_parser("simulate", help="draw a synthetic dataset")
    sp.add_argument("--config", required=True, help="SimulationSpec JSON")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("select", help="compute the block indicator")
    add_xy(sp)
    add_selection(sp)
    add_common(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("fit", help="fit coefficients")
    add_xy(sp)
    add_selection(sp)
    sp.add_argument("--method", choices=("nbslasso", "lasso", "enet"),
                    default="nbslasso")
    sp.add_argument("--lambda-mode", choices=("cv", "fixed"), default="cv")
    sp.add_argument("--m3", type=float, default=4.0,
                    help="fixed-penalty multiplier")
    sp.add_argument("--mix", type=float, default=None,
                    help="l1 fraction of the penalty")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--unstandardized", action="store_true",
                    help="also write raw-scale coefficients and intercepts")
    add_common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("benchmark", help="replicated simulation study")
    sp.add_argument("--config", required=True, help="SimulationSpec JSON")
    sp.add_argument("--methods", default="nbslasso,lasso")
    sp.add_argument("--replications", type=int, default=20)
    sp.add_argument("--seed", type=int, default=None,
                    help="base seed (default: spec seed)")
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "alpha", None) is not None:
        if not 0.0 < args.alpha < 1.0:
            print("error: alpha must lie in (0, 1)", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
