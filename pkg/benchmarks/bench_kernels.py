"""Time the numba and numpy builds of the inner loops.

    python3 benchmarks/bench_kernels.py [--repeat N]

Compile time is excluded: every numba kernel is called once before timing.
"""
import argparse
import timeit

import numpy as np

from covpot import _kernels
from covpot.thresholds import LINEAR, _vertex_near


def gpd_problem(n, seed=0):
    r = np.random.default_rng(seed)
    x = r.random(n)
    g = np.exp(-0.05 - 2 * x)
    v = (r.random(n) ** -g - 1) / g
    return np.ascontiguousarray(LINEAR.matrix(x)), v


def qr_problem(n, seed=1):
    r = np.random.default_rng(seed)
    x = r.random(n)
    y = 1 + 2 * x + (0.5 + x) * r.standard_t(3, n)
    B = np.ascontiguousarray(LINEAR.matrix(x))
    return B, y, _vertex_near(B, y, np.array([1.0, 2.0]))


def cases():
    B, v = gpd_problem(500)
    beta = np.array([np.log(0.4), -1.0, 0.0, 0.1])
    x0 = np.array([np.log(0.3), 0.0, 0.0, 0.0])
    step = np.full(4, 0.25)
    Bq, y, h0 = qr_problem(2000)
    yield ("gpd_nll (n=500)",
           lambda: _kernels.gpd_nll_numpy(beta, B, v, 2, 2, True, True),
           lambda: _kernels.gpd_nll_numba(beta, B, v, 2, 2, True, True))
    nm = (x0, step, B, v, 2, 2, True, True, 1e-9, 1e-10, 5000)
    yield ("nelder_mead (n=500, 4 coef)",
           lambda: _kernels.nelder_mead_numpy(*nm),
           lambda: _kernels.nelder_mead_numba(*nm))
    yield ("qr_vertex_descent (n=2000, p=0.9)",
           lambda: _kernels.qr_vertex_descent_numpy(Bq, y, 0.9, h0.copy(), 200_000),
           lambda: _kernels.qr_vertex_descent_numba(Bq, y, 0.9, h0.copy(), 200_000))


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':36s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, f_np, f_nb in cases():
        f_nb()  # compile
        t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:36s} {t_np * 1e3:10.3f}ms {t_nb * 1e3:10.3f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
