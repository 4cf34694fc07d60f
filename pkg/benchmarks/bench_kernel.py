"""Compare the compiled SGD kernel against the pure-Python fallback.

Runs the same traced-SGD workload through both backends and reports wall
time per update plus the speedup. Usage:

    python3 benchmarks/bench_kernel.py [--steps 200000] [--n 18576] [--d 8]
"""

import argparse
import time

import numpy as np

from edgepipe import _kernel_py
from edgepipe.backend import BACKEND, sgd_trace


def make_problem(n, d, steps, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
    A = X.T @ X / n
    h = X.T @ y / n
    c0 = float(y @ y) / n
    idx = rng.integers(0, n, steps).astype(np.int64)
    w0 = rng.standard_normal(d)
    return X, y, A, h, c0, idx, w0


def time_kernel(kernel, problem, repeats, alpha=1e-4, lam_n=1e-3):
    X, y, A, h, c0, idx, w0 = problem
    losses = np.empty(len(idx))
    best = float("inf")
    w_out = None
    for _ in range(repeats):
        w = w0.copy()
        t0 = time.perf_counter()
        kernel(w, X, y, idx, alpha, 2.0 * lam_n, A, h, c0, lam_n, losses)
        best = min(best, time.perf_counter() - t0)
        w_out = w
    return best, w_out, losses.copy()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--n", type=int, default=18576)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    problem = make_problem(args.n, args.d, args.steps)
    print(f"workload: {args.steps} updates, {args.n} samples, dim {args.d}")
    print(f"selected backend: {BACKEND}")

    t_py, w_py, l_py = time_kernel(_kernel_py.sgd_trace, problem, args.repeats)
    print(f"python   {t_py:8.4f} s  ({1e9 * t_py / args.steps:7.1f} ns/update)")

    if BACKEND == "python":
        print("compiled extension not built; nothing to compare against")
        return

    t_c, w_c, l_c = time_kernel(sgd_trace, problem, args.repeats)
    print(f"{BACKEND:8s} {t_c:8.4f} s  ({1e9 * t_c / args.steps:7.1f} ns/update)")
    print(f"speedup: {t_py / t_c:.1f}x")
    agree = np.allclose(w_py, w_c, rtol=1e-12) and np.allclose(l_py, l_c, rtol=1e-12)
    print(f"results agree to 1e-12 relative: {agree}")


if __name__ == "__main__":
    main()
