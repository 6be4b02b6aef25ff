"""Command-line interface: ``copulacca {latentcor,cca,simulate}``.

Exit codes: 0 success, 2 malformed input, 3 numeric failure.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .data import check_mixed_data
from .fileio import (InputError, dump_json, matrix_to_csv, read_matrix_csv, read_types,
                     rows_to_csv, write_atomic)
from .latent import DEFAULT_NU, estimate_latent_correlation
from .scca import CRITERIA, SccaProblem, fit_pairs
from .simulation import METHODS, ScenarioError, SimScenario, default_curve_grid, run_study

EXIT_INPUT = 2
EXIT_NUMERIC = 3

ROW_COLUMNS = ("replication", "method", "rho_hat", "loss1", "loss2", "tpr1", "tpr2",
               "tnr1", "tnr2", "size1", "size2", "lambda1", "lambda2", "iterations",
               "converged")


class NumericError(RuntimeError):
    pass


def _nu(value):
    nu = float(value)
    if not 0.0 <= nu < 1.0:
        raise argparse.ArgumentTypeError(f"nu must lie in [0, 1), got {value}")
    return nu


def _positive_int(value):
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return v


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _meta(args, seed=None):
    return {"tool": f"copulacca {__version__}", "config": _config(args), "seed": seed}


def _load(path, types_spec):
    values, names = read_matrix_csv(path)
    types = read_types(types_spec, names)
    try:
        data = check_mixed_data(values, types, names)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return data


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values in the estimate")


def cmd_latentcor(args):
    data = _load(args.input, args.types)
    corr = estimate_latent_correlation(data, nu=args.nu, method=args.method)
    _check_finite(corr.r_tilde)
    names = list(data.column_names)
    meta = _meta(args)
    if args.format == "csv":
        text = matrix_to_csv(corr.r_tilde, names, meta)
    else:
        payload = {**meta, "columns": names, "types": [t.value for t in data.types],
                   "r_tilde": corr.r_tilde, "r_psd": corr.r_psd, "r_hat": corr.r_hat,
                   "tau": corr.tau,
                   "thresholds": None if corr.thresholds is None else
                   [None if np.isnan(v) else v for v in corr.thresholds]}
        text = dump_json(payload)
    write_atomic(args.out, text)


def cmd_cca(args):
    x1 = _load(args.input, args.types)
    x2 = _load(args.input2, args.types2 or args.types)
    if x1.n != x2.n:
        raise InputError(f"{args.input} has {x1.n} rows but {args.input2} has {x2.n}")
    values = np.hstack([x1.values, x2.values])
    data = check_mixed_data(values, x1.types + x2.types,
                            [f"x1:{c}" for c in x1.column_names]
                            + [f"x2:{c}" for c in x2.column_names])
    corr = estimate_latent_correlation(data, nu=args.nu, method=args.method)
    _check_finite(corr.r_tilde)
    problem = SccaProblem.from_correlation(corr.r_tilde, x1.p, min_eigenvalue=args.nu / 2)
    pairs = fit_pairs(problem, args.pairs, criterion=args.criterion, n=x1.n,
                      grid_count=args.grid_count, grid_eps=args.grid_eps)
    out = []
    for k, pair in enumerate(pairs, start=1):
        _check_finite(pair.w1, pair.w2)
        out.append({
            "pair": k, "w1": pair.w1, "w2": pair.w2, "objective": pair.objective,
            "lambda1": pair.lambda1, "lambda2": pair.lambda2,
            "support1": [x1.column_names[i] for i in pair.support1],
            "support2": [x2.column_names[i] for i in pair.support2],
            "converged": pair.converged, "iterations": pair.iterations,
        })
    payload = {**_meta(args), "columns1": list(x1.column_names),
               "columns2": list(x2.column_names), "n": x1.n, "pairs": out}
    write_atomic(args.out, dump_json(payload))


def _load_scenario(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def cmd_simulate(args):
    raw = _load_scenario(args.scenario)
    try:
        scenario = SimScenario.from_dict(raw)
    except ScenarioError as exc:
        raise InputError(f"invalid scenario at scenario.{exc}") from None
    except TypeError as exc:
        raise InputError(f"invalid scenario: {exc}") from None
    methods = [m.strip() for m in args.methods.split(",")]
    for i, m in enumerate(methods):
        if m not in METHODS:
            raise InputError(f"methods[{i}]: unknown method {m!r}; choose from {METHODS}")
    seed = scenario.seed if args.seed is None else args.seed
    grid = default_curve_grid() if args.curves else None
    result = run_study(scenario, methods, args.replications, seed, nu=args.nu,
                       curve_grid=grid)
    meta = _meta(args, seed)
    meta["scenario"] = scenario.to_dict()
    summary = {**meta, **result.to_json()}
    if args.format == "csv":
        write_atomic(f"{args.out}.csv", rows_to_csv(result.rows, ROW_COLUMNS, meta))
        write_atomic(f"{args.out}.json", dump_json(summary))
    else:
        write_atomic(f"{args.out}.json", dump_json({**summary, "rows": result.rows}))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="copulacca",
        description="Latent correlation and sparse CCA for mixed continuous, "
                    "binary and zero-inflated data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--nu", type=_nu, default=DEFAULT_NU,
                       help="shrinkage toward the identity (default 0.01)")
        p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("latentcor", help="estimate the latent correlation matrix")
    p.add_argument("--input", required=True, help="CSV with a header row")
    p.add_argument("--types", required=True,
                   help="inline list like 'truncated,binary' or a name,type sidecar CSV")
    p.add_argument("--method", choices=("kendall", "pearson"), default="kendall")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    common(p)
    p.set_defaults(func=cmd_latentcor)

    p = sub.add_parser("cca", help="fit sparse canonical pairs between two CSVs")
    p.add_argument("--input", required=True)
    p.add_argument("--input2", required=True)
    p.add_argument("--types", required=True,
                   help="types for --input (or a sidecar covering both files)")
    p.add_argument("--types2", help="types for --input2; defaults to --types")
    p.add_argument("--method", choices=("kendall", "pearson"), default="kendall")
    p.add_argument("--criterion", choices=CRITERIA, default="bic2")
    p.add_argument("--grid-count", type=_positive_int, default=20)
    p.add_argument("--grid-eps", type=float, default=0.01)
    p.add_argument("--pairs", type=_positive_int, default=1)
    p.add_argument("--format", choices=("json",), default="json")
    common(p)
    p.set_defaults(func=cmd_cca)

    p = sub.add_parser("simulate", help="run a seeded simulation study")
    p.add_argument("--scenario", help="scenario JSON; omitted fields take defaults")
    p.add_argument("--replications", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, help="master seed; defaults to the scenario seed")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--curves", action="store_true",
                   help="also average TPR/FPR curves over a fixed penalty grid")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="csv writes OUT.csv rows plus OUT.json summary")
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # validation errors raised deeper in the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
