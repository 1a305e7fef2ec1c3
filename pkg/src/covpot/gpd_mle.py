"""Maximum likelihood for the GPD with covariate-dependent shape and scale.

``gamma(x) = link(B1(x) @ beta1)`` and ``sigma(x) = link(B2(x) @ beta2)`` with log
or identity links and polynomial bases in the scaled covariate.  The fit runs
Nelder-Mead on the negative log-likelihood and then polishes with Newton steps
on the analytic gradient.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import FitError
from .thresholds import LINEAR, Basis, ExceedanceSet

GAMMA_ZERO_TOL = _kernels.GAMMA_ZERO_TOL

NM_XTOL = 1e-9
NM_FTOL = 1e-10
NM_MAX_EVAL = 5000
MAX_RESTARTS = 3


class Link(str, enum.Enum):
    LOG = "log"
    IDENTITY = "identity"

    def __str__(self):
        return self.value

    def inverse(self, eta):
        return np.exp(eta) if self is Link.LOG else eta

    def __call__(self, value):
        return np.log(value) if self is Link.LOG else value


class DomainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinkedGpdModel:
    beta1: np.ndarray
    beta2: np.ndarray
    shape_link: Link = Link.LOG
    scale_link: Link = Link.LOG
    basis: Basis = LINEAR
    scale_basis: Basis = None

    def __post_init__(self):
        object.__setattr__(self, "shape_link", Link(self.shape_link))
        object.__setattr__(self, "scale_link", Link(self.scale_link))
        if self.scale_basis is None:
            object.__setattr__(self, "scale_basis", self.basis)
        b1 = np.asarray(self.beta1, dtype=float)
        b2 = np.asarray(self.beta2, dtype=float)
        if b1.shape != (self.basis.dim,) or b2.shape != (self.scale_basis.dim,):
            raise ValueError("coefficient lengths do not match the bases")
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.beta1, self.beta2])

    def with_beta(self, beta) -> "LinkedGpdModel":
        d1 = self.basis.dim
        return LinkedGpdModel(beta[:d1], beta[d1:], self.shape_link, self.scale_link,
                              self.basis, self.scale_basis)

    def gamma_at(self, x):
        g = self.shape_link.inverse(self.basis.matrix(x) @ self.beta1)
        if self.shape_link is Link.IDENTITY and np.any(g <= 0):
            warnings.warn("identity-link shape is nonpositive at a queried covariate",
                          DomainWarning, stacklevel=2)
        return g

    def sigma_at(self, x):
        s = self.scale_link.inverse(self.scale_basis.matrix(x) @ self.beta2)
        if np.any(s <= 0):
            warnings.warn("scale is nonpositive at a queried covariate", DomainWarning, stacklevel=2)
        return s


def gamma_at(model: LinkedGpdModel, x):
    g = model.gamma_at(x)
    return g.item() if np.ndim(x) == 0 else g


@dataclass(frozen=True)
class FitResult:
    model: LinkedGpdModel
    loglik: float
    iterations: int
    converged: bool
    restarts: int = 0
    grad_norm: float = field(default=np.nan)


def _design(model: LinkedGpdModel, x):
    deg = max(model.basis.degree, model.scale_basis.degree)
    return Basis(deg).matrix(x)


def _nll_beta(model, B, v, beta):
    return _kernels.gpd_nll(beta, B, v, model.basis.dim, model.scale_basis.dim,
                            model.shape_link is Link.LOG, model.scale_link is Link.LOG)


def neg_loglik(model: LinkedGpdModel, exc: ExceedanceSet) -> float:
    """Negative log-likelihood; +inf when an excess falls outside the support."""
    B = _design(model, exc.covariates)
    v = np.ascontiguousarray(exc.excesses, dtype=float)
    return float(_nll_beta(model, B, v, model.beta))


def _grad_beta(model, B, v, beta):
    d1, d2 = model.basis.dim, model.scale_basis.dim
    B1, B2 = B[:, :d1], B[:, :d2]
    eta1, eta2 = B1 @ beta[:d1], B2 @ beta[d1:]
    gam = model.shape_link.inverse(eta1)
    sig = model.scale_link.inverse(eta2)
    u = v / sig
    small = np.abs(gam) < GAMMA_ZERO_TOL
    g = np.where(small, 1.0, gam)
    z = g * u
    d_gam = np.where(small, u - 0.5 * u * u,
                     -np.log1p(z) / g**2 + (1.0 / g + 1.0) * u / (1.0 + z))
    d_sig = np.where(small, (1.0 - u) / sig, (1.0 - (1.0 + g) * u / (1.0 + z)) / sig)
    if model.shape_link is Link.LOG:
        d_gam = d_gam * gam
    if model.scale_link is Link.LOG:
        d_sig = d_sig * sig
    return np.concatenate([B1.T @ d_gam, B2.T @ d_sig])


def neg_loglik_grad(model: LinkedGpdModel, exc: ExceedanceSet) -> np.ndarray:
    """Analytic gradient of :func:`neg_loglik` with respect to ``(beta1, beta2)``."""
    B = _design(model, exc.covariates)
    return _grad_beta(model, B, np.asarray(exc.excesses, float), model.beta)


def _fd_grad(f, beta, step):
    g = np.empty_like(beta)
    for j in range(beta.size):
        h = step * (1.0 + abs(beta[j]))
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def gradient_check(model: LinkedGpdModel, exc: ExceedanceSet, step=1e-6) -> float:
    """Max abs difference between central differences and the analytic gradient."""
    if step == 0:
        return 0.0
    B = _design(model, exc.covariates)
    v = np.ascontiguousarray(exc.excesses, dtype=float)
    fd = _fd_grad(lambda b: _nll_beta(model, B, v, b), model.beta, step)
    return float(np.max(np.abs(fd - _grad_beta(model, B, v, model.beta))))


def _moment_start(v, basis, scale_basis, shape_link, scale_link):
    m, var = v.mean(), v.var()
    # GPD moments: mean^2 / var = 1 - 2 gamma
    g0 = float(np.clip(0.5 * (1.0 - m * m / var), 0.05, 0.9))
    s0 = m * (1.0 - g0)
    b1 = np.zeros(basis.dim)
    b2 = np.zeros(scale_basis.dim)
    b1[0] = shape_link(g0)
    b2[0] = scale_link(s0)
    return np.concatenate([b1, b2])


def _newton_polish(fun, grad, beta, f, max_iter=50):
    for _ in range(max_iter):
        g = grad(beta)
        if not np.all(np.isfinite(g)) or np.max(np.abs(g)) <= 1e-10 * (1.0 + abs(f)):
            break
        H = np.empty((beta.size, beta.size))
        for j in range(beta.size):
            h = 1e-5 * (1.0 + abs(beta[j]))
            e = np.zeros_like(beta)
            e[j] = h
            H[:, j] = (grad(beta + e) - grad(beta - e)) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            np.linalg.cholesky(H)
            direction = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            direction = g / max(np.max(np.abs(np.diag(H))), 1.0)
        t = 1.0
        while t > 1e-8:
            cand = beta - t * direction
            fc = fun(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        if np.array_equal(cand, beta):
            break
        beta, f = cand, fc
    return beta, f


def fit_conditional_gpd(exc: ExceedanceSet, basis: Basis = LINEAR, shape_link=Link.LOG,
                        scale_link=Link.LOG, scale_basis: Basis | None = None,
                        start=None, max_restarts=MAX_RESTARTS) -> FitResult:
    """Maximum-likelihood fit of the conditional GPD to an exceedance set.

    ``start`` optionally gives initial ``(beta1, beta2)`` concatenated; otherwise
    the intercepts come from GPD moment estimates and slopes start at zero.  A fit
    is flagged converged when the finite-difference gradient at the optimum is
    below ``1e-4 * (1 + |loglik|)``; otherwise up to ``max_restarts`` perturbed
    restarts are tried and the best optimum is kept.
    """
    shape_link, scale_link = Link(shape_link), Link(scale_link)
    scale_basis = basis if scale_basis is None else scale_basis
    template = LinkedGpdModel(np.zeros(basis.dim), np.zeros(scale_basis.dim),
                              shape_link, scale_link, basis, scale_basis)
    v = np.ascontiguousarray(exc.excesses, dtype=float)
    n_coef = basis.dim + scale_basis.dim
    if v.size < 2 * n_coef:
        raise FitError(f"{v.size} excesses are too few for {n_coef} coefficients")
    if np.ptp(v) == 0:
        raise FitError("all excesses are equal")
    B = _design(template, exc.covariates)
    d1, d2 = basis.dim, scale_basis.dim
    is_log = (shape_link is Link.LOG, scale_link is Link.LOG)

    def fun(b):
        return _kernels.gpd_nll(b, B, v, d1, d2, *is_log)

    def grad(b):
        return _grad_beta(template, B, v, b)

    x0 = (_moment_start(v, basis, scale_basis, shape_link, scale_link)
          if start is None else np.asarray(start, dtype=float).copy())
    step = np.full(n_coef, 0.25)
    if not is_log[0]:
        step[:d1] *= max(abs(x0[0]), 0.1)
    if not is_log[1]:
        step[d1:] *= max(abs(x0[d1]), 1e-3)

    rng = np.random.default_rng(20180101)
    best = None
    evals = 0
    for attempt in range(max_restarts + 1):
        init = x0 if attempt == 0 else best[0] + rng.normal(0.0, 0.5, n_coef) * step
        beta, f, nev, _ = _kernels.nelder_mead(init, step, B, v, d1, d2, *is_log,
                                               NM_XTOL, NM_FTOL, NM_MAX_EVAL)
        evals += int(nev)
        beta, f = _newton_polish(fun, grad, np.asarray(beta, float), float(f))
        if best is None or f < best[1]:
            best = (beta, f)
        gnorm = float(np.max(np.abs(_fd_grad(fun, best[0], 1e-6)))) if np.isfinite(best[1]) else np.inf
        converged = bool(np.isfinite(best[1]) and gnorm < 1e-4 * (1.0 + abs(best[1])))
        if converged:
            break
    model = template.with_beta(best[0])
    if converged and Link.IDENTITY in (shape_link, scale_link):
        # identity links must stay positive over the fitted covariate range
        xs = np.linspace(exc.covariates.min(), exc.covariates.max(), 101)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DomainWarning)
            if np.any(model.gamma_at(xs) <= 0) or np.any(model.sigma_at(xs) <= 0):
                converged = False
    return FitResult(model, -best[1], evals, converged, attempt, gnorm)
