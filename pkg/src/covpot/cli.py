"""Command line: ``covpot simulate | fit | threshold``.

Exit status: 0 success, 1 runtime or convergence failure, 2 usage or validation
error.  Settings can come from a JSON file (``--config``) whose keys are the
long option names with dashes replaced by underscores; explicit flags win.
Outputs default to ``$COVPOT_OUTPUT_DIR`` (or the working directory).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ConvergenceError, DataError, EmptyExceedanceError, FitError
from .gpd_mle import fit_conditional_gpd
from .ingest import fmt, read_csv, write_fit_report, write_metrics
from .simulation import DEFAULT_GAMMA_COEFFS, DEFAULT_X_EVAL, SimConfig, run_study
from .thresholds import Basis, Method, exceedances, fit_threshold

log = logging.getLogger("covpot")

OUTPUT_DIR_ENV = "COVPOT_OUTPUT_DIR"
FIT_X_QUERY = (0.10, 0.40, 0.70, 0.90)
PRESETS = {"full": {"R": 1000}, "desk": {"R": 200}}
FAMILIES = ("burr", "pareto", "frechet")

RUNTIME_ERRORS = (FitError, ConvergenceError, CalibrationError, EmptyExceedanceError)


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _default_out(name):
    return str(Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / name)


def _add_model_flags(p, threshold_only=False):
    p.add_argument("--degree", type=int, help="polynomial degree of the threshold u(x) (default 1)")
    if threshold_only:
        return
    p.add_argument("--gpd-degree", type=int, help="polynomial degree of the shape predictor (default 1)")
    p.add_argument("--scale-degree", type=int,
                   help="polynomial degree of the scale predictor (default: same as --gpd-degree; 0 = constant)")
    p.add_argument("--shape-link", choices=["log", "identity"], help="link for gamma(x) (default log)")
    p.add_argument("--scale-link", choices=["log", "identity"], help="link for sigma(x) (default log)")


def _add_data_flags(p):
    p.add_argument("--input", help="input CSV with a header row")
    p.add_argument("--x-col", help="covariate column name (default x)")
    p.add_argument("--y-col", help="response column name (default y)")
    p.add_argument("--method", choices=[m.value for m in Method], help="threshold method")
    p.add_argument("--k", type=int, help="target number of exceedances")
    p.add_argument("--p", type=float, help="asymmetry level for regression thresholds (instead of --k)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="covpot",
        description="Covariate-dependent thresholds and conditional GPD tail-index estimation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo comparison of the threshold methods")
    s.add_argument("--config", help="JSON file with default settings")
    s.add_argument("--preset", choices=sorted(PRESETS), help="full: R=1000; desk: R=200")
    s.add_argument("--family", choices=FAMILIES + ("all",), help="data family (default all)")
    s.add_argument("--n", type=int, help="sample size (default 1000)")
    s.add_argument("--r", dest="R", type=int, help="number of replications (default 1000)")
    s.add_argument("--seed", type=int, help="master seed (default 42)")
    s.add_argument("--k-grid", type=_ints, help="comma-separated exceedance counts (default: 40 log-spaced, 20..0.8n)")
    s.add_argument("--x-eval", type=_floats, help="comma-separated evaluation covariates (default 0.32,0.57,0.99)")
    s.add_argument("--gamma-coeffs", type=_floats, help="a,b of gamma(x)=exp(a+b*x) (default -0.05,-2)")
    s.add_argument("--methods", help="comma-separated subset of constant,quantile,expectile")
    s.add_argument("--workers", type=int, help="worker processes (default 1)")
    s.add_argument("--out", help="metrics CSV path (default $COVPOT_OUTPUT_DIR/metrics.csv)")
    _add_model_flags(s)

    f = sub.add_parser("fit", help="fit a threshold and the conditional GPD to a CSV dataset")
    f.add_argument("--config", help="JSON file with default settings")
    _add_data_flags(f)
    _add_model_flags(f)
    f.add_argument("--x-query", type=_floats, help="scaled covariates to report gamma/sigma at (default 0.1,0.4,0.7,0.9)")
    f.add_argument("--out", help="JSON report path (default $COVPOT_OUTPUT_DIR/fit_report.json)")

    t = sub.add_parser("threshold", help="fit a threshold only and flag the exceedances")
    t.add_argument("--config", help="JSON file with default settings")
    _add_data_flags(t)
    _add_model_flags(t, threshold_only=True)
    t.add_argument("--out", help="CSV path (default $COVPOT_OUTPUT_DIR/threshold.csv)")
    return parser


def _preset(name):
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}")
    return PRESETS[name]


def merge_config(args) -> dict:
    """File settings overlaid by every flag the user actually passed."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}")
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if "r" in cfg:
            cfg["R"] = cfg.pop("r")
    # precedence: file preset < file values < --preset < explicit flags
    if cfg.get("preset"):
        cfg = {**_preset(cfg["preset"]), **cfg}
    if getattr(args, "preset", None):
        cfg.update(_preset(args.preset))
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        cfg[key] = value
    return cfg


def _basis(cfg, key, default):
    try:
        return Basis(cfg.get(key, default))
    except (TypeError, ValueError) as err:
        raise UsageError(f"--{key.replace('_', '-')}: {err}")


def _listify(value, conv):
    if isinstance(value, str):
        return [conv(v) for v in value.split(",") if v.strip()]
    return [conv(v) for v in value]


def sim_configs(cfg) -> list:
    family = cfg.get("family", "all")
    families = FAMILIES if family == "all" else [family]
    gpd_basis = _basis(cfg, "gpd_degree", 1)
    scale = cfg.get("scale_degree")
    try:
        common = dict(
            n=int(cfg.get("n", 1000)),
            R=int(cfg.get("R", 1000)),
            k_grid=_listify(cfg["k_grid"], int) if cfg.get("k_grid") else None,
            x_eval=_listify(cfg.get("x_eval", DEFAULT_X_EVAL), float),
            gamma_coeffs=_listify(cfg.get("gamma_coeffs", DEFAULT_GAMMA_COEFFS), float),
            master_seed=int(cfg.get("seed", cfg.get("master_seed", 42))),
            basis=_basis(cfg, "degree", 1),
            gpd_basis=gpd_basis,
            scale_basis=None if scale is None else _basis(cfg, "scale_degree", scale),
            shape_link=cfg.get("shape_link", "log"),
            scale_link=cfg.get("scale_link", "log"),
            methods=_listify(cfg.get("methods", [m.value for m in Method]), str),
        )
        return [SimConfig(family=fam, **common) for fam in families]
    except (TypeError, ValueError) as err:
        raise UsageError(str(err))


def cmd_simulate(cfg) -> int:
    configs = sim_configs(cfg)
    workers = int(cfg.get("workers", 1))
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    out = cfg.get("out") or _default_out("metrics.csv")
    rows = []
    for c in configs:
        log.info("simulating %s: n=%d R=%d, %d k values", c.family.value, c.n, c.R, len(c.k_grid))
        rows.extend(run_study(c, workers=workers,
                              progress=lambda i, tot: log.debug("replication %d/%d", i, tot)))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_metrics(rows, out)
    for c in configs:
        for x in c.x_eval:
            for m in c.methods:
                cell = [r for r in rows if r.family == c.family.value and r.x == x
                        and r.method == m.value and np.isfinite(r.mad)]
                if not cell:
                    print(f"{c.family.value} x={x:g} {m.value}: no successful fits")
                    continue
                best = min(cell, key=lambda r: (r.mad, r.k))
                print(f"{c.family.value} x={x:g} {m.value}: best k={best.k} "
                      f"MAD={best.mad:.4f} bias={best.bias:+.4f}")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _load_and_threshold(cfg):
    if not cfg.get("input"):
        raise UsageError("--input is required")
    if not cfg.get("method"):
        raise UsageError("--method is required")
    try:
        method = Method(cfg["method"])
    except ValueError:
        raise UsageError(f"unknown method {cfg['method']!r}")
    k, p = cfg.get("k"), cfg.get("p")
    if k is not None and p is not None:
        raise UsageError("give either --k or --p, not both")
    if k is None and p is None:
        raise UsageError("one of --k or --p is required")
    if method is Method.CONSTANT and k is None:
        raise UsageError("the constant threshold needs --k")
    if k is not None and int(k) < 1:
        raise UsageError("--k must be a positive integer")
    if p is not None and not 0 < float(p) < 1:
        raise UsageError("--p must lie in (0, 1)")
    basis = _basis(cfg, "degree", 1)
    try:
        data = read_csv(cfg["input"], cfg.get("x_col", "x"), cfg.get("y_col", "y"))
    except DataError as err:
        raise UsageError(str(err))
    if k is not None and int(k) >= data.n:
        raise UsageError(f"--k must be below the sample size {data.n}")
    model = fit_threshold(data, method, basis, k=None if k is None else int(k),
                          p=None if p is None else float(p))
    return data, model


def cmd_fit(cfg) -> int:
    data, model = _load_and_threshold(cfg)
    exc = exceedances(data, model)
    scale = cfg.get("scale_degree")
    x_query = _listify(cfg.get("x_query", FIT_X_QUERY), float)
    if not all(0.0 <= x <= 1.0 for x in x_query):
        raise UsageError("--x-query values must lie in [0, 1]")
    fit = fit_conditional_gpd(
        exc, _basis(cfg, "gpd_degree", 1), cfg.get("shape_link", "log"), cfg.get("scale_link", "log"),
        scale_basis=None if scale is None else _basis(cfg, "scale_degree", scale))
    out = cfg.get("out") or _default_out("fit_report.json")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    report = write_fit_report(fit, model, x_query, out, scaling=data.scaling)
    print(f"{model.method} threshold: p={model.p} k={model.achieved_k}; "
          f"loglik={fit.loglik:.6g} converged={fit.converged}")
    if not fit.converged:
        print("GPD fit did not converge; report written without gamma estimates", file=sys.stderr)
        return 1
    for x, g in zip(report["x_query"], report["gamma"]):
        print(f"  gamma({x:g}) = {g:.6g}")
    return 0


def cmd_threshold(cfg) -> int:
    data, model = _load_and_threshold(cfg)
    u = model(data.x)
    flags = data.y > u + 1e-12 * (1.0 + np.abs(u))
    out = cfg.get("out") or _default_out("threshold.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "u", "exceeded"])
        for xv, yv, uv, e in zip(data.x, data.y, u, flags):
            w.writerow([fmt(xv), fmt(yv), fmt(uv), int(e)])
    print(f"{model.method} threshold: p={model.p} k={model.achieved_k}; wrote {out}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "threshold": cmd_threshold}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merge_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as err:
        print(f"covpot {args.command}: error: {err}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as err:
        print(f"covpot {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"covpot {args.command}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
