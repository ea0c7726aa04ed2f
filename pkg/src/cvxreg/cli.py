"""Command-line front end: ``cvxreg {fit,predict,tune,experiment}``.

Exit codes: 0 success, 2 bad arguments, 3 data errors, 4 solver failures.
Options may also come from ``--config <json>``; explicit flags win over the
file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .estimators import FitError, fit
from .io import DataFormatError, load_model, read_dataset, save_model, write_dataset
from .model import Dataset, EstimatorConfig, InvalidInput
from .tuning import (CvError, Grid, config_template, default_grid, reference_vector_ols,
                     tune)

log = logging.getLogger("cvxreg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
ESTIMATORS = ("cr", "pcr", "lcr", "alcr", "wrcr")

DEFAULTS = {
    "fit": {"estimator": "cr", "monotone": False, "standardize": False, "method": "auto",
            "seed": 0},
    "predict": {"subgradients": False, "seed": 0},
    "tune": {"grid": "paper6", "folds": 5, "monotone": False, "seed": 0},
    "experiment": {"seed": 0, "jobs": 1, "out": ".", "freeze_tuning": False, "folds": 5},
}


class UsageError(Exception):
    """Bad or inconsistent command-line arguments."""


# --------------------------------------------------------------------------
# Formatting helpers


def _g(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


def print_table(headers, rows, out=None):
    """Plain aligned table with 4 significant digits."""
    out = out or sys.stdout
    cells = [[_g(v) for v in r] for r in rows]
    widths = [max([len(h)] + [len(r[k]) for r in cells]) for k, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)), file=out)
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)), file=out)


def _vector_arg(text, name):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = [t for t in str(text).split(",") if t.strip()]
    try:
        return np.array([float(v) for v in vals])
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _list_arg(text, name, kind=float):
    if text is None:
        return None
    vals = text if isinstance(text, (list, tuple)) else [t for t in str(text).split(",") if t.strip()]
    try:
        out = [kind(v) for v in vals]
    except ValueError:
        raise UsageError(f"--{name}: expected a comma-separated list, got {text!r}") from None
    if not out:
        raise UsageError(f"--{name}: empty list")
    return out


def _dump_json(doc, path):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    return v


# --------------------------------------------------------------------------
# fit


def _estimator_config(args, data: Dataset):
    """Configuration from fit flags; WRCR with ``--q`` derives its bounds from CR."""
    try:
        return _build_config(args, data)
    except InvalidInput as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise UsageError(str(exc)) from None


def _build_config(args, data: Dataset):
    est = args.estimator.lower()
    mono = bool(args.monotone)
    if est == "cr":
        return EstimatorConfig.cr(monotone=mono), None
    if est == "pcr":
        if args.lam is None:
            raise UsageError("pcr requires --lambda")
        return EstimatorConfig.pcr(args.lam, monotone=mono), None
    if est == "lcr":
        if args.L is None:
            raise UsageError("lcr requires --L")
        return EstimatorConfig.lcr(args.L, monotone=mono), None
    if est == "alcr":
        if args.L0 is None or args.b0 is None:
            raise UsageError("alcr requires --b0 and --L0")
        return EstimatorConfig.alcr(_vector_arg(args.b0, "b0"), args.L0, monotone=mono), None
    has_box = args.l0 is not None or args.u0 is not None
    if args.q is not None and has_box:
        raise UsageError("wrcr takes either --l0/--u0 or --q, not both")
    if args.q is None and not has_box:
        raise UsageError("wrcr requires bounds (--l0 and --u0) or a percentile level --q")
    if has_box:
        if args.l0 is None or args.u0 is None:
            raise UsageError("wrcr requires both --l0 and --u0")
        return EstimatorConfig.wrcr(_vector_arg(args.l0, "l0"), _vector_arg(args.u0, "u0"),
                                    monotone=mono), None
    if not 0 <= args.q < 0.5:
        raise UsageError(f"--q must lie in [0, 0.5), got {args.q}")
    cr = fit(data, EstimatorConfig.cr(monotone=mono), method=args.method,
             standardize=bool(args.standardize))
    config = config_template("wrcr", cr_subgradients=cr.betas, monotone=mono)(args.q)
    derived = {"q": args.q, "l0": config.l0.tolist(), "u0": config.u0.tolist()}
    return config, derived


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    config, derived = _estimator_config(args, data)
    model = fit(data, config, method=args.method, standardize=bool(args.standardize))
    stats = dict(model.fit_stats, seed=args.seed)
    if derived is not None:
        stats["derived_bounds"] = derived
    model = dataclasses.replace(model, fit_stats=stats)
    if args.out:
        save_model(model, args.out)
    print(f"estimator {config.variant}  n={data.n}  d={data.d}  seed={args.seed}")
    print(f"sse {stats['sse']:.4g}  solver {stats['solver_status']}  "
          f"kkt residual {stats['kkt_residual']:.2e}  iterations {stats['iterations']}")
    if derived is not None:
        print(f"bounds from CR subgradient percentiles (q={args.q}):")
        print_table(["coordinate", "l0", "u0"],
                    [[c, lo, hi] for c, lo, hi in zip(_columns(data), derived["l0"],
                                                      derived["u0"])])
    print_table(["coordinate", "max |beta|"],
                [[c, float(v)] for c, v in zip(_columns(data), np.abs(model.betas).max(axis=0))])
    if args.out:
        print(f"model written to {args.out}")
    return EXIT_OK


def _columns(data):
    return list(data.columns or [f"x{k + 1}" for k in range(data.d)])


# --------------------------------------------------------------------------
# predict


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = read_dataset(args.data)
    if data.d != model.d:
        raise DataFormatError(f"{args.data}: data has d={data.d} but the model has d={model.d}")
    extra = {"yhat": model.predict(data.x)}
    if args.subgradients:
        B = model.betas[model.active_piece(data.x)]
        for k in range(model.d):
            extra[f"beta{k + 1}"] = B[:, k]
    if args.out:
        write_dataset(data, args.out, extra)
        print(f"predictions for {data.n} rows written to {args.out} (seed={args.seed})")
    else:
        write_dataset(data, sys.stdout, extra)
    return EXIT_OK


# --------------------------------------------------------------------------
# tune


def _load_grid(spec: str, variant: str, cr_betas, b0) -> Grid:
    if spec in ("paper6", "paper7"):
        return default_grid(variant, spec, cr_subgradients=cr_betas, b0=b0)
    if not spec.startswith("file:"):
        raise UsageError(f"--grid must be paper6, paper7 or file:<path>, got {spec!r}")
    path = spec[5:]
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"grid file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"grid file {path}: invalid JSON at line {exc.lineno}") from None
    values = doc.get("values") if isinstance(doc, dict) else doc
    if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise DataFormatError(f"grid file {path}: expected a list of numbers or "
                              f"an object with a 'values' list")
    name = default_grid(variant, "paper7").name
    try:
        return Grid(name, tuple(values))
    except InvalidInput as exc:
        raise DataFormatError(f"grid file {path}: {exc}") from None


def cmd_tune(args) -> int:
    variant = args.estimator.upper()
    if variant == "CR":
        raise UsageError("cr has no tuning parameter; choose pcr, lcr, alcr or wrcr")
    data = read_dataset(args.data)
    tdata = read_dataset(args.tuning_data) if args.tuning_data else data
    if tdata.d != data.d:
        raise DataFormatError(f"{args.tuning_data}: d={tdata.d} differs from --data d={data.d}")
    mono = bool(args.monotone)
    cr_betas = b0 = None
    if variant in ("ALCR", "WRCR"):
        cr_betas = fit(data, EstimatorConfig.cr(monotone=mono)).betas
    if variant == "ALCR":
        b0 = (_vector_arg(args.b0, "b0") if args.b0 is not None
              else reference_vector_ols(tdata, ridge=True))
        if b0.size != data.d:
            raise DataFormatError(f"--b0 has length {b0.size}, data has d={data.d}")
    grid = _load_grid(args.grid, variant, cr_betas, b0)
    config, res = tune(tdata, variant, grid, seed=args.seed, k=args.folds, b0=b0,
                       cr_subgradients=cr_betas, monotone=mono)
    doc = {**res.to_dict(), "estimator": variant, "config": _jsonable(config.to_dict()),
           "monotone": mono}
    if args.out:
        _dump_json(_jsonable(doc), args.out)
    print(f"estimator {variant}  grid {args.grid} ({len(grid)} values, "
          f"{grid.values[0]:.4g}..{grid.values[-1]:.4g})  folds {args.folds}  seed={args.seed}")
    print(f"chosen {res.parameter} = {res.best:.4g}  (cv score {res.best_score:.4g})")
    if args.out:
        print(f"cv result written to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# experiment


def _preset_options(args, preset):
    opts = dict(ex.PRESETS[preset])
    for key in ("n", "d", "snr", "reps", "estimators", "sigma", "function", "profile"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if "n" in opts:
        opts["n"] = _list_arg(opts["n"], "n", int)
    if "d" in opts:
        opts["d"] = _list_arg(opts["d"], "d", int)
    if "snr" in opts:
        opts["snr"] = _list_arg(opts["snr"], "snr", float)
    opts["estimators"] = [e.lower() for e in _list_arg(opts["estimators"], "estimators", str)]
    bad = [e for e in opts["estimators"] if e not in ESTIMATORS]
    if bad:
        raise UsageError(f"--estimators: unknown estimator {bad[0]!r}")
    if "reps" in opts and int(opts["reps"]) < 1:
        raise UsageError("--reps must be at least 1")
    return opts


def cmd_experiment(args) -> int:
    preset = args.preset
    if preset not in ex.PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {', '.join(ex.PRESETS)}")
    opts = _preset_options(args, preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / preset
    if preset == "boundary":
        if len(opts["estimators"]) != 1 or opts["estimators"][0] != "cr":
            raise UsageError("the boundary preset fits CR only")
        reports = [ex.boundary_diagnostic(n, int(opts["reps"]), seed=args.seed,
                                          sigma=float(opts["sigma"]), jobs=args.jobs)
                   for n in opts["n"]]
        report = ex.merge_reports("boundary", reports,
                                  {"preset": preset, "n": opts["n"], "replications": opts["reps"],
                                   "sigma": opts["sigma"], "seed": args.seed})
        rows = [{"metric": c.labels["metric"], "n": c.labels["n"], "replication": r, "value": v}
                for c in report.cells for r, v in enumerate(c.values)]
        ex.write_long_csv(rows, f"{stem}.csv", ("metric", "n", "replication", "value"))
        _print_summary(report, ["metric", "n"])
    elif preset == "frontier-fixture":
        report = ex.frontier_study(estimators=[e.upper() for e in opts["estimators"]],
                                   seed=args.seed, folds=args.folds)
        report.config["preset"] = preset
        table = report.extra["rmse_table"]
        ex.write_long_csv(table, f"{stem}.csv",
                          ("estimator", "parameter", "in_rmse", "out_rmse", "ratio"))
        print(f"frontier fixture: {report.config['n_train']} training and "
              f"{report.config['n_test']} test observations, seed={args.seed}")
        print_table(["estimator", "parameter", "in-sample RMSE", "out-of-sample RMSE", "ratio"],
                    [[r["estimator"], r["parameter"], r["in_rmse"], r["out_rmse"], r["ratio"]]
                     for r in table])
    else:
        try:
            cfg = ex.McConfig(opts["function"], tuple(opts["n"]), tuple(opts["d"]),
                              tuple(opts["snr"]), int(opts["reps"]),
                              tuple(e.upper() for e in opts["estimators"]),
                              profile=opts.get("profile", "paper6"), folds=args.folds,
                              freeze_tuning=bool(args.freeze_tuning))
        except InvalidInput as exc:
            raise UsageError(str(exc)) from None
        report = ex.mc_study(cfg, seed=args.seed, jobs=args.jobs)
        report.config["preset"] = preset
        ex.write_long_csv(report.rows, f"{stem}.csv")
        _print_summary(report, ["estimator", "n", "d", "snr"])
    _dump_json(_jsonable(report.to_dict()), f"{stem}.json")
    print(f"report written to {stem}.json and {stem}.csv (seed={args.seed})")
    if report.partial:
        failed = sum(len(c.errors) for c in report.cells)
        print(f"warning: {failed} replication results failed; see the report", file=sys.stderr)
        if all(c.ok.size == 0 for c in report.cells):
            return EXIT_SOLVER
    return EXIT_OK


def _print_summary(report, keys):
    rows = []
    for s in report.summary():
        ci = (f"{s['mean']:.4g} +/- {s['half_width']:.4g}" if s["ci_available"]
              else "n/a (fewer than 2 values)")
        rows.append([s[k] for k in keys] + [s["mean"], ci, f"{s['completed']}/{s['replications']}"])
    print_table(keys + ["mean", "95% CI", "completed"], rows)


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvxreg", description="Convex regression toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--config", help="JSON file of option defaults")

    p = sub.add_parser("fit", help="fit an estimator and save the model")
    common(p)
    p.add_argument("--data", required=True, help="CSV with header x1,...,xd,y")
    p.add_argument("--estimator", choices=ESTIMATORS, type=str.lower)
    p.add_argument("--lambda", dest="lam", type=float, help="PCR penalty")
    p.add_argument("--L", type=float, help="LCR norm bound")
    p.add_argument("--L0", type=float, help="ALCR radius around b0")
    p.add_argument("--b0", help="ALCR reference vector, comma separated")
    p.add_argument("--l0", help="WRCR lower bounds, comma separated")
    p.add_argument("--u0", help="WRCR upper bounds, comma separated")
    p.add_argument("--q", type=float, help="WRCR percentile level for data-driven bounds")
    p.add_argument("--monotone", action="store_true", default=None,
                   help="also require non-negative subgradients")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="solve in standardized units")
    p.add_argument("--method", choices=("auto", "dense", "lazy"))
    p.add_argument("--out", help="where to write the model JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a saved model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--subgradients", action="store_true", default=None,
                   help="add the active piece's slope as beta1..betad")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tune", help="pick a tuning parameter by k-fold cross-validation")
    common(p)
    p.add_argument("--data", required=True, help="data for the CR fit behind data-driven grids")
    p.add_argument("--tuning-data", help="data the cross-validation runs on (default: --data)")
    p.add_argument("--estimator", required=True, choices=ESTIMATORS, type=str.lower)
    p.add_argument("--grid", help="paper6, paper7 or file:<path> (default paper6)")
    p.add_argument("--folds", type=int)
    p.add_argument("--b0", help="ALCR reference vector (default: least-squares slope)")
    p.add_argument("--monotone", action="store_true", default=None)
    p.add_argument("--out", help="where to write the CV result JSON")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="run a packaged experiment")
    common(p)
    p.add_argument("--preset", required=True, help=", ".join(ex.PRESETS))
    p.add_argument("--n", help="sample sizes, comma separated")
    p.add_argument("--d", help="dimensions, comma separated")
    p.add_argument("--snr", help="signal-to-noise ratios, comma separated")
    p.add_argument("--reps", type=int, help="replications per setting")
    p.add_argument("--estimators", help="comma separated subset of cr,pcr,lcr,alcr,wrcr")
    p.add_argument("--function", choices=ex.FUNCTIONS)
    p.add_argument("--sigma", type=float, help="noise level for the boundary preset")
    p.add_argument("--profile", choices=("paper6", "paper7"), help="candidate grids")
    p.add_argument("--folds", type=int)
    p.add_argument("--freeze-tuning", action="store_true", default=None,
                   help="tune in the first replication only")
    p.add_argument("--jobs", type=int, help="worker processes for replications")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.set_defaults(func=cmd_experiment)
    return parser


def _apply_config(args, parser):
    """Fill options not given on the command line from --config, then defaults."""
    file_opts = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_opts = json.load(fh)
        except OSError as exc:
            raise UsageError(f"--config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config {args.config}: invalid JSON at line {exc.lineno}") from None
        if not isinstance(file_opts, dict):
            raise UsageError(f"--config {args.config}: expected a JSON object")
    known = set(vars(args)) - {"func", "command", "config"}
    renamed = {"lambda": "lam", "tuning-data": "tuning_data", "freeze-tuning": "freeze_tuning"}
    for key, val in file_opts.items():
        dest = renamed.get(key, key.replace("-", "_"))
        if dest not in known:
            raise UsageError(f"--config {args.config}: unknown option {key!r}")
        if getattr(args, dest) is None:
            setattr(args, dest, val)
    for key, val in DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    if args.command == "experiment" and args.jobs < 1:
        raise UsageError("--jobs must be at least 1")


def _setup_logging():
    level = os.environ.get("CVXREG_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG,
              "warning": logging.WARNING}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    if level not in levels:
        log.error("CVXREG_LOG=%s not recognised; using error", level)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config(args, parser)
        return args.func(args)
    except UsageError as exc:
        print(f"cvxreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, CvError) as exc:
        print(f"cvxreg {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidInput, OSError) as exc:
        print(f"cvxreg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
