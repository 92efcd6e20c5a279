#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the hot paths (pairwise distances + kernel mixture, grid curve
evaluation, scalarized mirror-descent solve) on both backends and checks that
results agree to within 1e-10 relative.  The JIT is warmed up before timing.

Run: python3 benchmarks/bench_backends.py
"""
import time

import numpy as np

from dgselect import _kernels_numpy
from dgselect.tradeoff import DiscreteDGProblem, _grid_tables, _simplex_grid

try:
    from dgselect import _kernels_numba
except ImportError:
    raise SystemExit("numba unavailable; nothing to compare")


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def check_close(name, a, b):
    if isinstance(a, tuple):
        for i, (x, y) in enumerate(zip(a, b)):
            check_close(f"{name}[{i}]", x, y)
        return
    finite = np.isfinite(np.asarray(b))
    assert (np.isfinite(np.asarray(a)) == finite).all(), f"{name}: inf pattern differs"
    if not np.allclose(np.asarray(a)[finite], np.asarray(b)[finite], rtol=1e-10, atol=1e-12):
        raise AssertionError(f"{name}: backends disagree beyond 1e-10 relative")


def bench_row(name, nb_fn, np_fn):
    nb_fn()  # JIT warm-up
    t_nb, out_nb = timeit(nb_fn)
    t_np, out_np = timeit(np_fn)
    check_close(name, out_nb, out_np)
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:<28} numba {t_nb * 1e3:9.2f} ms   numpy {t_np * 1e3:9.2f} ms   x{speedup:5.1f}")


def main():
    rng = np.random.default_rng(0)

    a = rng.normal(size=(400, 32))
    b = rng.normal(size=(300, 32))
    gammas = np.array([0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0])
    bench_row(
        "pairwise_sq_dists 400x300",
        lambda: _kernels_numba.pairwise_sq_dists(a, b),
        lambda: _kernels_numpy.pairwise_sq_dists(a, b),
    )
    d = _kernels_numpy.pairwise_sq_dists(a, b)
    bench_row(
        "multi_gamma_kernel (7 g)",
        lambda: _kernels_numba.multi_gamma_kernel(d, gammas),
        lambda: _kernels_numpy.multi_gamma_kernel(d, gammas),
    )

    problem = DiscreteDGProblem(
        n_x=2, n_z=2, n_y=2,
        p_s_x=[0.5, 0.5], p_u_x=[0.5, 0.5],
        label_s=[[1.0, 0.0], [0.0, 1.0]], label_u=[[0.2, 0.8], [0.8, 0.2]],
        classifier_g=[0, 1], loss_l=[[0.0, 1.0], [1.0, 0.0]],
    )
    grid = _simplex_grid(2, 1000)  # 1001^2 channels
    tables = _grid_tables(problem, grid)
    bench_row(
        "grid_curve_eval 1001^2",
        lambda: _kernels_numba.grid_curve_eval(*tables),
        lambda: _kernels_numpy.grid_curve_eval(*tables),
    )

    q0 = np.full((2, 2), 0.5)
    solve_args = (
        problem.p_u_x, problem.p_s_x, problem.label_u, problem.label_s,
        np.ascontiguousarray(problem.risk_table()), 0.1, 50_000, 100, 1e-10,
    )
    nb_solve = lambda: _kernels_numba.scalarized_solve(q0.copy(), 5.0, *solve_args)
    np_solve = lambda: _kernels_numpy.scalarized_solve(q0.copy(), 5.0, *solve_args)
    nb_solve()
    t_nb, out_nb = timeit(nb_solve)
    t_np, out_np = timeit(np_solve)
    # iterative solve: compare the optimum reached, not the float trajectory
    assert abs(out_nb[1] - out_np[1]) <= 1e-8 * max(1.0, abs(out_np[1])), "objectives differ"
    assert np.allclose(out_nb[0], out_np[0], atol=1e-6), "solutions differ"
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{'scalarized_solve mu=5':<28} numba {t_nb * 1e3:9.2f} ms   "
          f"numpy {t_np * 1e3:9.2f} ms   x{speedup:5.1f}")

    print("deterministic kernels agree within 1e-10 relative; "
          "solver optima agree within 1e-8")


if __name__ == "__main__":
    main()
