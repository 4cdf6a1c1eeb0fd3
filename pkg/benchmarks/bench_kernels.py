"""Compare the numba and numpy mixture log-density kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both paths are imported directly, so the SMOOTHDIV_DISABLE_NUMBA flag does not
matter here. The first numba call (compilation or cache load) is excluded.
"""
import argparse
import time

import numpy as np

from smoothdiv import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = [(1, 1000, 10000), (1, 4000, 65536), (2, 2000, 20000), (3, 1000, 10000)]
    print(f"{'d':>2} {'centers':>8} {'evals':>7} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max|diff|':>10}")
    for d, k, m in cases:
        centers = rng.standard_normal((k, d))
        x = 2.0 * rng.standard_normal((m, d))
        lw = np.full(k, -np.log(k))
        a = _kernels.mixture_logpdf_numpy(x, centers, lw, 0.7)
        if _kernels.HAS_NUMBA:
            b = _kernels.mixture_logpdf_numba(x, centers, lw, 0.7)
            t_nb = best_of(lambda: _kernels.mixture_logpdf_numba(x, centers, lw, 0.7), args.repeat)
            diff = float(np.max(np.abs(a - b)))
        else:
            t_nb, diff = float("nan"), float("nan")
        t_np = best_of(lambda: _kernels.mixture_logpdf_numpy(x, centers, lw, 0.7), args.repeat)
        print(f"{d:>2} {k:>8} {m:>7} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
