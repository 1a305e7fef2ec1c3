"""Inner loops: conditional GPD likelihood, Nelder-Mead, quantile-regression pivots.

Two builds of every kernel exist side by side:

* ``*_numpy`` -- vectorised numpy, always available;
* ``*_numba`` -- ``numba.njit`` compiled, ``None`` when numba is missing.

``nelder_mead`` and ``qr_vertex_descent`` are written once against the numpy
subset numba understands and compiled from the same source; only the likelihood
has two sources (a fused loop for numba, array expressions for numpy).

The module-level names without suffix point at the active build. Setting
``COVPOT_DISABLE_NUMBA=1`` before import selects the numpy build.
"""
import os
import types

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

GAMMA_ZERO_TOL = 1e-8

_DISABLED = os.environ.get("COVPOT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# negative log-likelihood of the conditional GPD
#
# beta = (beta1[:n_shape], beta2[:n_scale]); the linear predictors use the
# leading columns of the basis matrix B.  Links: log when the flag is set,
# identity otherwise.  Points outside the support give +inf.
# ---------------------------------------------------------------------------

def gpd_nll_numpy(beta, B, v, n_shape, n_scale, shape_log, scale_log):
    eta1 = B[:, :n_shape] @ beta[:n_shape]
    eta2 = B[:, :n_scale] @ beta[n_shape:n_shape + n_scale]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        gam = np.exp(eta1) if shape_log else eta1
        sig = np.exp(eta2) if scale_log else eta2
        if np.any(sig <= 0):
            return np.inf
        z = gam * v / sig
        if np.any(z <= -1.0):
            return np.inf
        small = np.abs(gam) < GAMMA_ZERO_TOL
        safe = np.where(small, 1.0, gam)
        terms = np.where(small, v / sig, (1.0 / safe + 1.0) * np.log1p(z))
        total = np.sum(np.log(sig)) + np.sum(terms)
    if not np.isfinite(total):
        return np.inf
    return float(total)


def _gpd_nll_loop(beta, B, v, n_shape, n_scale, shape_log, scale_log):
    total = 0.0
    for i in range(v.shape[0]):
        eta1 = 0.0
        for j in range(n_shape):
            eta1 += B[i, j] * beta[j]
        eta2 = 0.0
        for j in range(n_scale):
            eta2 += B[i, j] * beta[n_shape + j]
        gam = np.exp(eta1) if shape_log else eta1
        sig = np.exp(eta2) if scale_log else eta2
        if not sig > 0.0:
            return np.inf
        if abs(gam) < GAMMA_ZERO_TOL:
            total += np.log(sig) + v[i] / sig
        else:
            z = gam * v[i] / sig
            if not z > -1.0:
                return np.inf
            total += np.log(sig) + (1.0 / gam + 1.0) * np.log1p(z)
    if not np.isfinite(total):
        return np.inf
    return total


# ---------------------------------------------------------------------------
# Nelder-Mead on the likelihood (standard coefficients 1, 2, 1/2, 1/2)
# ---------------------------------------------------------------------------

def _nelder_mead_src(x0, step, B, v, n_shape, n_scale, shape_log, scale_log,
                     xtol, ftol, max_eval):
    d = x0.shape[0]
    sim = np.empty((d + 1, d))
    fs = np.empty(d + 1)
    for i in range(d + 1):
        for j in range(d):
            sim[i, j] = x0[j]
        if i > 0:
            sim[i, i - 1] += step[i - 1]
        fs[i] = _objective(sim[i], B, v, n_shape, n_scale, shape_log, scale_log)
    nev = d + 1
    converged = False
    while True:
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        diam = 0.0
        scale = 1.0
        for j in range(d):
            scale = max(scale, 1.0 + abs(sim[0, j]))
            for i in range(1, d + 1):
                diam = max(diam, abs(sim[i, j] - sim[0, j]))
        if diam <= xtol * scale and fs[d] - fs[0] <= ftol:
            converged = True
            break
        if nev >= max_eval:
            break

        cen = np.zeros(d)
        for i in range(d):
            for j in range(d):
                cen[j] += sim[i, j] / d
        xr = 2.0 * cen - sim[d]
        fr = _objective(xr, B, v, n_shape, n_scale, shape_log, scale_log)
        nev += 1
        if fr < fs[0]:
            xe = 3.0 * cen - 2.0 * sim[d]
            fe = _objective(xe, B, v, n_shape, n_scale, shape_log, scale_log)
            nev += 1
            if fe < fr:
                sim[d] = xe
                fs[d] = fe
            else:
                sim[d] = xr
                fs[d] = fr
            continue
        if fr < fs[d - 1]:
            sim[d] = xr
            fs[d] = fr
            continue
        if fr < fs[d]:
            xc = 0.5 * (cen + xr)
        else:
            xc = 0.5 * (cen + sim[d])
        fc = _objective(xc, B, v, n_shape, n_scale, shape_log, scale_log)
        nev += 1
        if fc < min(fr, fs[d]):
            sim[d] = xc
            fs[d] = fc
            continue
        for i in range(1, d + 1):
            sim[i] = 0.5 * (sim[0] + sim[i])
            fs[i] = _objective(sim[i], B, v, n_shape, n_scale, shape_log, scale_log)
        nev += d
    return sim[0].copy(), fs[0], nev, converged


# ---------------------------------------------------------------------------
# exact quantile regression by descent along the edges of the LP polytope
# ---------------------------------------------------------------------------

def qr_vertex_descent(B, y, p, h, max_iter):
    """Minimise sum of check losses starting from the vertex spanned by rows ``h``.

    At a vertex the fitted function interpolates the ``d`` rows in ``h``.  Each
    step leaves the vertex along the edge with the most negative directional
    derivative and stops at the breakpoint where the slope turns nonnegative
    (a weighted-median line search); the row whose residual hits zero there
    enters the basis.  Returns ``(theta, h, iterations, optimal)``.
    """
    n, d = B.shape
    h = h.copy()
    it = 0
    ytol = 1e-12 * (1.0 + np.abs(y))
    while True:
        Bh = np.ascontiguousarray(B[h])
        theta = np.linalg.solve(Bh, y[h])
        Binv = np.ascontiguousarray(np.linalg.inv(Bh))
        r = y - B @ theta
        in_basis = np.zeros(n, dtype=np.bool_)
        for j in range(d):
            in_basis[h[j]] = True
            r[h[j]] = 0.0
        A = B @ Binv

        zero = (np.abs(r) <= ytol) & ~in_basis
        psi = np.full(n, p - 1.0)
        psi[r > 0] = p
        psi[zero] = 0.0
        psi[in_basis] = 0.0
        g = -(np.ascontiguousarray(A.T) @ psi)
        d_plus = g + (1.0 - p)
        d_minus = -g + p
        for i in np.nonzero(zero)[0]:
            for j in range(d):
                a = A[i, j]
                d_plus[j] += max(-a * p, a * (1.0 - p))
                d_minus[j] += max(a * p, -a * (1.0 - p))
        colscale = 1.0 + np.abs(A).sum(axis=0)

        best = 0.0
        jbest = -1
        sbest = 1.0
        for j in range(d):
            if d_plus[j] / colscale[j] < best:
                best = d_plus[j] / colscale[j]
                jbest = j
                sbest = 1.0
            if d_minus[j] / colscale[j] < best:
                best = d_minus[j] / colscale[j]
                jbest = j
                sbest = -1.0
        if jbest < 0 or best > -1e-12:
            return theta, h, it, True
        if it >= max_iter:
            return theta, h, it, False

        slope = d_plus[jbest] if sbest > 0 else d_minus[jbest]
        a = sbest * A[:, jbest]
        cand = (~in_basis) & (~zero) & (a != 0.0)
        idx = np.nonzero(cand)[0]
        t = r[idx] / a[idx]
        keep = t > 0
        idx = idx[keep]
        t = t[keep]
        if idx.shape[0] == 0:
            return theta, h, it, False
        order = np.argsort(t)
        enter = -1
        for q in range(order.shape[0]):
            i = idx[order[q]]
            slope += abs(a[i])
            if slope >= 0.0:
                enter = i
                break
        if enter < 0:
            return theta, h, it, False
        h[jbest] = enter
        it += 1


# ---------------------------------------------------------------------------
# builds
# ---------------------------------------------------------------------------

# the numpy Nelder-Mead is the same code object with the numpy likelihood bound
nelder_mead_numpy = types.FunctionType(
    _nelder_mead_src.__code__,
    {**globals(), "_objective": gpd_nll_numpy},
    "nelder_mead_numpy",
)
qr_vertex_descent_numpy = qr_vertex_descent

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    gpd_nll_numba = _jit(_gpd_nll_loop)
    _objective = gpd_nll_numba
    nelder_mead_numba = _jit(_nelder_mead_src)
    qr_vertex_descent_numba = _jit(qr_vertex_descent)
else:  # pragma: no cover
    _objective = gpd_nll_numpy
    gpd_nll_numba = nelder_mead_numba = qr_vertex_descent_numba = None

if USE_NUMBA:
    gpd_nll = gpd_nll_numba
    nelder_mead = nelder_mead_numba
    qr_vertex_descent = qr_vertex_descent_numba
else:
    gpd_nll = gpd_nll_numpy
    nelder_mead = nelder_mead_numpy
    qr_vertex_descent = qr_vertex_descent_numpy
