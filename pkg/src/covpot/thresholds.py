"""Covariate-dependent thresholds: constant, regression quantile, regression expectile.

A threshold is a polynomial in the scaled covariate, ``u(x) = sum_j theta_j x**j``.
Quantile thresholds minimise the asymmetric absolute loss, expectile thresholds
the asymmetric squared loss.  For the regression methods the asymmetry level
``p`` can be calibrated so that exactly ``k`` observations exceed the threshold,
which puts all three methods on the same exceedance-count axis.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CalibrationError, ConvergenceError, EmptyExceedanceError, FitError
from .ingest import Dataset

# relative slack so rows interpolated by the fit count as lying on the threshold
_ON_THRESHOLD_RTOL = 1e-12


class Method(str, enum.Enum):
    CONSTANT = "constant"
    QUANTILE = "quantile"
    EXPECTILE = "expectile"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Basis:
    """Polynomial basis 1, x, ..., x**degree (degree 0 is intercept-only)."""

    degree: int = 1

    def __post_init__(self):
        if not 0 <= int(self.degree) <= 3:
            raise ValueError("basis degree must be 0, 1, 2 or 3")
        object.__setattr__(self, "degree", int(self.degree))

    @property
    def dim(self) -> int:
        return self.degree + 1

    def matrix(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.ascontiguousarray(np.vander(x, self.dim, increasing=True))


INTERCEPT_ONLY = Basis(0)
LINEAR = Basis(1)


@dataclass(frozen=True)
class ThresholdModel:
    method: Method
    p: float | None
    theta: np.ndarray
    basis: Basis
    achieved_k: int
    # rows interpolated by a quantile fit (its LP vertex); None otherwise
    support: tuple | None = None

    def __call__(self, x):
        return self.basis.matrix(x) @ self.theta


@dataclass(frozen=True)
class ExceedanceSet:
    indices: np.ndarray
    excesses: np.ndarray
    covariates: np.ndarray

    def __len__(self):
        return self.indices.shape[0]


def quantile_check(tau, p):
    tau = np.asarray(tau, dtype=float)
    return np.abs(tau) * np.abs(p - (tau < 0))


def expectile_check(tau, p):
    tau = np.asarray(tau, dtype=float)
    return tau * tau * np.abs(p - (tau < 0))


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"asymmetry level must lie in (0, 1), got {p}")


def _exceeds(y, u):
    return y > u + _ON_THRESHOLD_RTOL * (1.0 + np.abs(u))


def _design(data: Dataset, basis: Basis):
    B = basis.matrix(data.x)
    if data.n < basis.dim or np.linalg.matrix_rank(B) < basis.dim:
        raise FitError(f"design with {basis.dim} columns is rank deficient on these covariates")
    return B


def _model(method, p, theta, basis, data, support=None):
    u = basis.matrix(data.x) @ theta
    k = int(np.count_nonzero(_exceeds(data.y, u)))
    return ThresholdModel(method, p, theta, basis, k, support)


# -- quantile regression ------------------------------------------------------

def _smoothed_qr_start(B, y, p, iters_per_level=4):
    """Approximate regression quantile by IRLS on an annealed smoothed check loss."""
    theta = np.linalg.lstsq(B, y, rcond=None)[0]
    scale = np.median(np.abs(y - np.median(y))) + 1e-300
    for h in np.geomspace(1e-2, 1e-8, 4) * scale:
        for _ in range(iters_per_level):
            r = y - B @ theta
            w = np.where(r < 0, 1.0 - p, p) / np.maximum(np.abs(r), h)
            BW = B * w[:, None]
            theta = np.linalg.solve(B.T @ BW + 1e-14 * np.eye(B.shape[1]), BW.T @ y)
    return theta


def _vertex_near(B, y, theta):
    """Rows closest to ``theta``'s fit that span the design."""
    d = B.shape[1]
    order = np.argsort(np.abs(y - B @ theta), kind="stable")
    chosen = []
    for i in order:
        trial = chosen + [int(i)]
        if np.linalg.matrix_rank(B[trial]) == len(trial):
            chosen = trial
            if len(chosen) == d:
                break
    return np.array(chosen, dtype=np.int64)


def _solve_quantile(B, y, p, start=None):
    if start is None:
        h = _vertex_near(B, y, _smoothed_qr_start(B, y, p))
    else:
        h = np.asarray(start, dtype=np.int64)
    max_iter = 50 * B.shape[0] + 100
    theta, h, it, optimal = _kernels.qr_vertex_descent(B, y, float(p), h, max_iter)
    if not optimal:
        raise ConvergenceError("quantile regression pivoting did not reach an optimal vertex", it)
    return np.asarray(theta), tuple(int(i) for i in h)


def fit_quantile_regression(data: Dataset, basis: Basis, p: float, start=None) -> ThresholdModel:
    """Regression quantile at level ``p``.

    The returned fit is an exact LP vertex: it interpolates ``basis.dim`` rows
    (``model.support``) and satisfies the subgradient optimality condition.
    ``start`` may be a previous ``support`` to warm start the pivoting.
    """
    _check_p(p)
    B = _design(data, basis)
    theta, support = _solve_quantile(B, data.y, p, start)
    return _model(Method.QUANTILE, float(p), theta, basis, data, support)


# -- expectile regression -----------------------------------------------------

def _expectile_objective(B, y, p, theta):
    return float(np.sum(expectile_check(y - B @ theta, p)))


def _solve_expectile(B, y, p, start=None, max_iter=200):
    """Asymmetric least squares by IRLS with weights {p, 1-p}.

    Each step is a Newton step for the (piecewise quadratic) objective, halved
    until the objective does not increase, so weight patterns cannot cycle.
    """
    theta = np.linalg.lstsq(B, y, rcond=None)[0] if start is None else np.array(start, float)
    f = _expectile_objective(B, y, p, theta)
    w_prev = None
    for it in range(1, max_iter + 1):
        r = y - B @ theta
        w = np.where(r >= 0, p, 1.0 - p)
        BW = B * w[:, None]
        new = np.linalg.solve(B.T @ BW, BW.T @ y)
        f_new = _expectile_objective(B, y, p, new)
        step = 1.0
        while f_new > f * (1 + 1e-15) and step > 1e-10:
            step *= 0.5
            new = theta + step * (new - theta)
            f_new = _expectile_objective(B, y, p, new)
        delta = np.max(np.abs(new - theta))
        stable = w_prev is not None and np.array_equal(w, w_prev)
        theta, f, w_prev = new, f_new, w
        if stable and delta < 1e-10 * (1.0 + np.max(np.abs(theta))):
            return theta
    raise ConvergenceError("expectile IRLS did not settle", max_iter)


def expectile_stationarity(B, y, p, theta) -> float:
    """Infinity norm of the weighted-residual gradient of the expectile loss."""
    r = y - B @ theta
    w = np.where(r >= 0, p, 1.0 - p)
    return float(np.max(np.abs(B.T @ (w * r))))


def fit_expectile_regression(data: Dataset, basis: Basis, p: float, start=None) -> ThresholdModel:
    _check_p(p)
    B = _design(data, basis)
    theta = _solve_expectile(B, data.y, p, start)
    return _model(Method.EXPECTILE, float(p), theta, basis, data)


# -- constant -----------------------------------------------------------------

def constant_threshold(data: Dataset, k: int) -> ThresholdModel:
    """Threshold at the (n-k)-th ascending order statistic.

    Exceedances are strict, so ties at the threshold can leave fewer than ``k``
    exceedances; ``achieved_k`` reports the actual count.
    """
    n = data.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    u = np.partition(data.y, n - k - 1)[n - k - 1]
    return _model(Method.CONSTANT, None, np.array([u]), INTERCEPT_ONLY, data)


# -- calibration ----------------------------------------------------------------

def calibrate_p_for_k(data: Dataset, basis: Basis, method, k: int, p_tol=1e-12, max_iter=200):
    """Bisect the asymmetry level so that exactly ``k`` observations exceed.

    The search runs over ``[1/(n+1), n/(n+1)]``, relying on the exceedance count
    being nonincreasing in ``p``.  When no level gives exactly ``k`` (the count
    jumps over it), the fit at the largest level with at least ``k`` exceedances
    is returned.
    """
    method = Method(method)
    if method is Method.CONSTANT:
        raise ValueError("calibration applies to regression thresholds only")
    n = data.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    B = _design(data, basis)
    y = data.y
    warm = [None]

    def fit(p):
        if method is Method.QUANTILE:
            theta, support = _solve_quantile(B, y, p, warm[0])
            warm[0] = support
        else:
            theta = _solve_expectile(B, y, p, warm[0])
            support = None
            warm[0] = theta
        return _model(method, float(p), theta, basis, data, support)

    lo, hi = 1.0 / (n + 1), n / (n + 1.0)
    m_lo = fit(lo)
    if m_lo.achieved_k == k:
        return m_lo
    if m_lo.achieved_k < k:
        raise CalibrationError(
            f"{method} threshold at p={lo:.3g} leaves {m_lo.achieved_k} < {k} exceedances")
    m_hi = fit(hi)
    if m_hi.achieved_k == k:
        return m_hi
    if m_hi.achieved_k > k:
        raise CalibrationError(
            f"{method} threshold at p={hi:.3g} still leaves {m_hi.achieved_k} > {k} exceedances")
    for _ in range(max_iter):
        if hi - lo <= p_tol:
            break
        mid = 0.5 * (lo + hi)
        m = fit(mid)
        if m.achieved_k == k:
            return m
        if m.achieved_k > k:
            lo, m_lo = mid, m
        else:
            hi = mid
    return m_lo


def fit_threshold(data: Dataset, method, basis: Basis = LINEAR, k=None, p=None) -> ThresholdModel:
    """Dispatch on ``method``; regression methods take either ``k`` (calibrated) or ``p``."""
    method = Method(method)
    if method is Method.CONSTANT:
        if k is None:
            raise ValueError("the constant threshold needs k")
        return constant_threshold(data, k)
    if k is not None:
        return calibrate_p_for_k(data, basis, method, k)
    if p is None:
        raise ValueError(f"the {method} threshold needs k or p")
    if method is Method.QUANTILE:
        return fit_quantile_regression(data, basis, p)
    return fit_expectile_regression(data, basis, p)


def exceedances(data: Dataset, model: ThresholdModel) -> ExceedanceSet:
    u = model(data.x)
    mask = _exceeds(data.y, u)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyExceedanceError("no observation exceeds the threshold")
    return ExceedanceSet(idx, data.y[idx] - u[idx], data.x[idx])
