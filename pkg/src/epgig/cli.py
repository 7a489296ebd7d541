"""Command-line front end: ``epgig {fit,penalty-curve,validate,experiment,generate}``.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 validation failure.
"""

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .distributions import PriorSpec
from .em import (
    Dataset,
    EmConfig,
    PilotUnavailableError,
    cross_validate,
    default_grid,
    fit_grouped,
    fit_linear,
    fit_logistic,
    get_method,
)
from .experiments import (
    FANLI_B,
    GROUPED_B,
    GROUPED_GROUPS,
    GroupedMethod,
    SimDesign,
    generate_fanli,
    oracle_study,
    run_table,
    stream,
    table3_designs,
    table5_designs,
    thread_count,
    write_csv,
    write_json,
)
from .validation import format_report, run_suite
from .weights import penalty_value, reweight_omega

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3

TABLE3_METHODS = ("method1", "method2", "method3", "method4", "method5", "method6", "method7",
                  "adlasso", "lasso", "ridge")
TABLE5_METHODS = ("method1'", "method2'", "method3'", "method4'", "method5'", "method6'", "method7'",
                  "lasso", "ridge")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# parsing helpers


def parse_prior(text):
    """``alpha=1,beta=1,gamma=0.5,q=1``; ``variant=gt,tau=1,lam=2,q=1``;
    ``variant=eg,alpha=1,gamma=1.5,q=1``; ``variant=jeffreys,q=1``."""
    fields = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"prior field {part!r} is not key=value")
        fields[key.strip().lower()] = value.strip()
    variant = fields.pop("variant", "generic").lower()
    try:
        num = {k: float(v) for k, v in fields.items()}
    except ValueError as exc:
        raise UsageError(f"prior: {exc}") from None
    need = {"generic": {"alpha", "beta", "gamma", "q"}, "gt": {"tau", "lam", "q"},
            "eg": {"alpha", "gamma", "q"}, "jeffreys": {"q"}}
    if variant not in need:
        raise UsageError(f"unknown prior variant {variant!r}; choose from {sorted(need)}")
    if set(num) != need[variant]:
        raise UsageError(f"{variant} prior needs exactly {sorted(need[variant])}, got {sorted(num)}")
    try:
        if variant == "generic":
            return PriorSpec.generic(num["alpha"], num["beta"], num["gamma"], num["q"])
        if variant == "gt":
            return PriorSpec.generalized_t(num["tau"], num["lam"], num["q"])
        if variant == "eg":
            return PriorSpec.gamma_mixing(num["alpha"], num["gamma"], num["q"])
        return PriorSpec.jeffreys(num["q"])
    except ValueError as exc:
        raise UsageError(f"prior: {exc}") from None


def parse_groups(text, p):
    """1-based ranges "1-4,5-8" -> 0-based index lists that partition range(p)."""
    groups = []
    for part in filter(None, (s.strip() for s in text.split(","))):
        lo, _, hi = part.partition("-")
        try:
            a, b = int(lo), int(hi or lo)
        except ValueError:
            raise UsageError(f"bad group range {part!r}") from None
        if not 1 <= a <= b:
            raise UsageError(f"bad group range {part!r}")
        groups.append(list(range(a - 1, b)))
    flat = sorted(j for g in groups for j in g)
    if flat != list(range(p)):
        raise UsageError(f"groups must cover columns 1..{p} exactly once")
    return groups


def parse_grid(text):
    """``lo:hi:k`` (log-spaced) or a comma list."""
    try:
        if ":" in text:
            lo, hi, k = text.split(":")
            return np.logspace(math.log10(float(lo)), math.log10(float(hi)), int(k))
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None


def parse_int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def read_csv(path):
    """Header row, numeric cells, last column is the response."""
    try:
        fh = sys.stdin if path == "-" else open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(header)
    data = np.empty((len(body), width))
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"{path}: row {i} has {len(row)} fields, header has {width}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {j + 1} ({header[j]!r}): not a number: {cell!r}") from None
    if not np.all(np.isfinite(data)):
        i, j = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: row {i + 2}, column {j + 1}: non-finite value")
    if width < 2:
        raise UsageError("empty feature matrix: the CSV needs at least one feature column before the response")
    return header[:-1], data[:, :-1], data[:, -1]


def write_dataset(path, X, y, names=None):
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["y"])
        for row, v in zip(X, y):
            w.writerow([repr(float(a)) for a in row] + [repr(float(v))])


class _open_out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        self.fh = sys.stdout if self.path in (None, "-") else open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()


def _emit_json(obj, path):
    with _open_out(path) as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _echo(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args):
    names, X, y = read_csv(args.csv)
    if (args.method is None) == (args.prior is None):
        raise UsageError("give exactly one of --method or --prior")
    groups = parse_groups(args.groups, X.shape[1]) if args.groups else None
    out = {"version": __version__, "config": _echo(args), "features": names}
    if args.logistic:
        if args.prior is None:
            raise UsageError("--logistic needs --prior")
        if groups is not None:
            raise UsageError("--logistic does not support --groups")
        try:
            fit = fit_logistic(X, y, EmConfig(parse_prior(args.prior), max_iters=args.max_iters))
        except ValueError as exc:
            raise DataError(str(exc)) from None
    else:
        try:
            data = Dataset(X, y)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        if args.prior is not None:
            cfg = EmConfig(parse_prior(args.prior), max_iters=args.max_iters)
            fit = fit_grouped(data, groups, cfg) if groups else fit_linear(data, cfg)
        else:
            try:
                method = get_method(args.method)
                if groups:
                    method = GroupedMethod(method, groups)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            if args.cv:
                grid = parse_grid(args.grid) if args.grid else default_grid()
                h = cross_validate(data, method, grid=grid, folds=args.folds, rng=stream(args.seed, "cli/fit-cv"))
            elif args.h is None:
                raise UsageError("--method needs --h or --cv")
            else:
                h = args.h
            out["hyperparameter"] = h
            fit = method(data, h)
    out.update(
        b_hat=fit.b_hat,
        intercept=fit.intercept,
        sigma_hat=None if not np.isfinite(fit.sigma_hat) else fit.sigma_hat,
        support=[int(j) + 1 for j in fit.support],
        iterations=fit.iterations,
        converged=fit.converged,
        objective=fit.objective_trace[-1] if len(fit.objective_trace) else None,
    )
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_penalty_curve(args):
    prior = parse_prior(args.prior)
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    if args.points == 1:
        b = np.array([args.bmin])
    else:
        b = np.linspace(args.bmin, args.bmax, args.points)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b", "penalty", "omega", "note"])
        for v in b:
            if v == 0 and prior.singular_at_origin:
                w.writerow([repr(float(v)), "", "", "skipped: density unbounded at b = 0"])
                continue
            w.writerow([repr(float(v)), repr(penalty_value(v, prior)), repr(reweight_omega(v, prior)), ""])
    return EXIT_OK


def cmd_validate(args):
    results = run_suite(args.level)
    print(format_report(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    if args.json:
        _emit_json({"version": __version__, "level": args.level,
                    "checks": [dict(name=r.name, error=r.error, tol=r.tol, passed=r.passed, detail=r.detail)
                               for r in results]}, args.json)
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_experiment(args):
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    workers = min(thread_count(), args.workers) if args.workers else thread_count()
    meta = {"version": __version__, "config": _echo(args), "workers": workers}
    if args.name == "oracle":
        n_grid = parse_int_list(args.n)
        rows = oracle_study(n_grid, lambda n: n**0.4, lambda n: float(n), lambda n: 1.0 / n, 1.5,
                            args.replicates, args.seed)
        meta["rules"] = {"lambda_n": "n^0.4", "alpha_n": "n", "beta_n": "1/n", "gamma": 1.5}
        dicts = [dict(r.__dict__) for r in rows]
        if args.out:
            with open(args.out + ".csv", "w", newline="") as fh:
                wr = csv.DictWriter(fh, fieldnames=list(dicts[0]))
                wr.writeheader()
                wr.writerows(dicts)
            _emit_json({"meta": meta, "rows": dicts}, args.out + ".json")
        else:
            _emit_json({"meta": meta, "rows": dicts}, None)
        return EXIT_OK
    designs = table3_designs() if args.name == "table3" else table5_designs()
    methods = args.methods.split(",") if args.methods else list(TABLE3_METHODS if args.name == "table3" else TABLE5_METHODS)
    grid = parse_grid(args.grid) if args.grid else None
    meta["grid"] = (default_grid() if grid is None else grid).tolist()
    try:
        rows = run_table(designs, methods, args.replicates, args.seed, grid=grid, folds=args.folds,
                         workers=workers, progress=True)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        write_csv(rows, args.out + ".csv")
        write_json(rows, args.out + ".json", meta)
    else:
        _emit_json({"meta": meta, "rows": [r.as_dict() for r in rows]}, None)
    return EXIT_OK


def cmd_generate(args):
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.design == "fanli":
        design = SimDesign(FANLI_B, args.n, args.delta)
    else:
        design = SimDesign(GROUPED_B, args.n, args.delta, groups=GROUPED_GROUPS)
    data = generate_fanli(design, stream(args.seed, f"cli/generate/{args.design}", args.index))
    write_dataset(args.out, data.X, data.y)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="epgig", description="Sparse regression with EP-GIG priors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of flag defaults for the chosen subcommand")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model to a CSV dataset (last column = response)")
    p.add_argument("csv")
    p.add_argument("--method", help="roster method: method1..method7, adlasso, lasso, ridge")
    p.add_argument("--prior", help="fixed prior, e.g. alpha=1,beta=1,gamma=0.5,q=1")
    p.add_argument("--h", type=float, help="method hyperparameter (beta, lambda or alpha)")
    p.add_argument("--cv", action="store_true", help="choose the hyperparameter by cross validation")
    p.add_argument("--grid", help="CV grid lo:hi:k (log spaced) or comma list")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--groups", help='1-based column ranges, e.g. "1-4,5-8"')
    p.add_argument("--logistic", action="store_true", help="0/1 response, penalized logistic EM")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("penalty-curve", help="CSV of (b, penalty, omega) for a prior")
    p.add_argument("--prior", required=True)
    p.add_argument("--bmin", type=float, default=-5.0)
    p.add_argument("--bmax", type=float, default=5.0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_penalty_curve)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("experiment", help="reproduce a simulation study")
    p.add_argument("name", choices=("table3", "table5", "oracle"))
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--methods", help="comma list of methods (default: full roster)")
    p.add_argument("--grid")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n", default="100,400,1600", help="oracle sample sizes")
    p.add_argument("--workers", type=int, help="cap on worker processes (EPGIG_THREADS also caps)")
    p.add_argument("--out", help="output path prefix; writes PREFIX.csv and PREFIX.json")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("--design", choices=("fanli", "grouped"), default="fanli")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0, help="replicate index within the seed's stream")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subs.choices.values():
        valid = {a.dest for a in sp._actions}
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items() if k.replace("-", "_") in valid})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            # --help, --version and argparse usage errors
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"epgig: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PilotUnavailableError) as exc:
        print(f"epgig: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
