"""Reading covariate/response tables and writing study outputs.

Covariates are min-max scaled to [0, 1] on ingestion; the raw range is kept on
the :class:`Dataset` so it can be mapped back.  All files are UTF-8, comma
delimited, ``\\n`` line endings, and reals are written with 17 significant
digits so that they round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

METRICS_HEADER = ["family", "n", "x", "gamma_true", "method", "k", "mad", "bias", "failures"]


def fmt(value: float) -> str:
    return "%.17g" % value


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    scaling: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DataError("x and y must be 1-d sequences of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("non-finite values in dataset")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise DataError("covariates must lie in [0, 1]; use Dataset.from_raw to scale")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "scaling", (float(self.scaling[0]), float(self.scaling[1])))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_raw(cls, x_raw, y) -> "Dataset":
        x_raw = np.asarray(x_raw, dtype=float)
        if x_raw.size == 0:
            raise DataError("no usable rows")
        lo, hi = float(x_raw.min()), float(x_raw.max())
        if not hi > lo:
            raise DataError("covariate column is constant; cannot scale to [0, 1]")
        return cls(scale_covariate(x_raw, lo, hi), y, (lo, hi))

    def raw_x(self) -> np.ndarray:
        lo, hi = self.scaling
        return lo + self.x * (hi - lo)


def scale_covariate(x_raw, lo, hi):
    x = (np.asarray(x_raw, dtype=float) - lo) / (hi - lo)
    # guards the last ulp so the [0, 1] invariant holds exactly
    return np.clip(x, 0.0, 1.0)


def read_csv(path, x_column: str, y_column: str) -> Dataset:
    """Load two numeric columns and min-max scale the covariate.

    Any row whose covariate or response is empty or non-numeric makes the whole
    read fail; the error lists the offending data rows (1-based, header
    excluded).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (x_column, y_column) if c not in header]
        if missing:
            raise DataError(f"column(s) {', '.join(missing)} not in header {header}")
        xs, ys, bad = [], [], []
        for row_no, row in enumerate(reader, start=1):
            try:
                xv = float(row[x_column])
                yv = float(row[y_column])
            except (TypeError, ValueError):
                bad.append(row_no)
                continue
            if not (math.isfinite(xv) and math.isfinite(yv)):
                bad.append(row_no)
                continue
            xs.append(xv)
            ys.append(yv)
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise DataError(f"missing or non-numeric values in row(s) {shown}")
    if not xs:
        raise DataError("no usable rows")
    return Dataset.from_raw(xs, ys)


def write_csv(data: Dataset, path, x_column="x", y_column="y"):
    """Write the dataset with its covariate mapped back to raw units."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x_column, y_column])
        for xv, yv in zip(data.raw_x(), data.y):
            w.writerow([fmt(xv), fmt(yv)])


def _metric_key(row):
    return (str(row.family), row.n, row.x, str(row.method), row.k)


def write_metrics(rows, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in sorted(rows, key=_metric_key):
            w.writerow([
                str(r.family), r.n, fmt(r.x), fmt(r.gamma_true), str(r.method), r.k,
                fmt(r.mad), fmt(r.bias), r.failures,
            ])


def read_metrics(path):
    from .simulation import MetricRow

    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise DataError(f"unexpected metrics header {reader.fieldnames}")
        return [
            MetricRow(
                family=r["family"], n=int(r["n"]), x=float(r["x"]),
                gamma_true=float(r["gamma_true"]), method=r["method"], k=int(r["k"]),
                mad=float(r["mad"]), bias=float(r["bias"]), failures=int(r["failures"]),
            )
            for r in reader
        ]


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def write_fit_report(fit, model, x_query, path, scaling=None):
    """Serialise a threshold + conditional GPD fit as JSON.

    ``gamma`` and ``sigma`` at ``x_query`` are only reported for converged fits.
    """
    gm = fit.model
    report = {
        "threshold": {
            "method": str(model.method),
            "p": model.p,
            "k": model.achieved_k,
            "degree": model.basis.degree,
            "theta": [float(t) for t in model.theta],
        },
        "gpd": {
            "degree": gm.basis.degree,
            "scale_degree": gm.scale_basis.degree,
            "shape_link": str(gm.shape_link),
            "scale_link": str(gm.scale_link),
            "beta1": [float(b) for b in gm.beta1],
            "beta2": [float(b) for b in gm.beta2],
            "loglik": _finite_or_none(fit.loglik),
            "iterations": fit.iterations,
            "converged": bool(fit.converged),
        },
        "x_query": [float(x) for x in x_query],
    }
    if scaling is not None:
        report["scaling"] = [float(scaling[0]), float(scaling[1])]
    if fit.converged:
        report["gamma"] = [float(g) for g in gm.gamma_at(x_query)]
        report["sigma"] = [float(s) for s in gm.sigma_at(x_query)]
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def read_fit_report(path):
    """Return ``(report, model)`` where ``model`` is the rebuilt LinkedGpdModel."""
    from .gpd_mle import LinkedGpdModel
    from .thresholds import Basis

    with Path(path).open(encoding="utf-8") as fh:
        report = json.load(fh)
    g = report["gpd"]
    model = LinkedGpdModel(
        beta1=np.array(g["beta1"]), beta2=np.array(g["beta2"]),
        shape_link=g["shape_link"], scale_link=g["scale_link"],
        basis=Basis(g["degree"]), scale_basis=Basis(g["scale_degree"]),
    )
    return report, model
