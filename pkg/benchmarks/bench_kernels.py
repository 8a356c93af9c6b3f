"""Benchmark the numba-jitted kernels against the pure-numpy fallbacks.

Run with::

    python3 benchmarks/bench_kernels.py [n_cells] [repeats]

Both code paths are imported from the same module; the numpy fallback is the
``*_np`` family and the jitted one the ``*_nb`` family (when numba is
available). Timings exclude JIT warmup.
"""

import sys
import time

import numpy as np

from quadadapt import kernels


def _time(fn, *args, repeats=5):
    fn(*args)                      # warmup (JIT compile, cache touch)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    n = int(argv[0]) if argv else 200_000
    repeats = int(argv[1]) if len(argv) > 1 else 5

    rng = np.random.default_rng(7)
    hx = np.full(n, 1.0 / 256.0)
    hy = np.full(n, 1.0 / 256.0)
    eps_h = rng.uniform(1e-4, 1.0, (n, 4))
    psi = rng.normal(0.0, 50.0, (n, 4))
    b = rng.uniform(0.0, 1.0, (n, 4))
    f = rng.uniform(0.0, 1.0, (n, 4))
    x = rng.normal(0.0, 200.0, 4 * n)
    uc = rng.normal(size=(n, 4))
    wn = rng.normal(size=(n, 9))
    areas = hx * hy

    print(f"n_cells = {n}, repeats = {repeats}, "
          f"numba available = {kernels.USE_NUMBA}")
    rows = []
    rows.append(("bernoulli", _time(kernels.bernoulli_np, x, repeats=repeats),
                 _time(kernels.bernoulli_nb, x, repeats=repeats)
                 if kernels.USE_NUMBA else None))
    rows.append(("local_fvsg",
                 _time(kernels.local_fvsg_np, hx, hy, eps_h, psi, b, f,
                       repeats=repeats),
                 _time(kernels.local_fvsg_nb, hx, hy, eps_h, psi, b, f,
                       repeats=repeats) if kernels.USE_NUMBA else None))
    rows.append(("eta_sq",
                 _time(kernels.eta_sq_np, uc, wn, areas, repeats=repeats),
                 _time(kernels.eta_sq_nb, uc, wn, areas, kernels._QN1,
                       kernels._QN2, kernels._QW, repeats=repeats)
                 if kernels.USE_NUMBA else None))

    print(f"{'kernel':<12} {'numpy [ms]':>12} {'numba [ms]':>12} "
          f"{'speedup':>8}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<12} {t_np * 1e3:>12.3f} {'-':>12} {'-':>8}")
        else:
            print(f"{name:<12} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} "
                  f"{t_np / t_nb:>8.2f}")


if __name__ == "__main__":
    main()
