"""Time the compiled and pure-Python kernels on representative workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from kalium._kernels import backends
from kalium.regression import SolverSettings, expand, fit_wlasso


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(seed=0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(600, 3))
    A = expand(z)
    b = 4.2 + z @ [0.4, 0.3, -0.3] + 0.2 * rng.normal(size=600)
    w = rng.uniform(0.05, 1.0, 600)
    k = rng.normal(4.2, 0.5, 600)
    return A, b, w, k


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    A, b, w, k = workloads()
    settings = SolverSettings(lam=0.9)
    impls = backends()
    results = {}
    for name, mod in impls.items():
        t_fit = _best_of(lambda: fit_wlasso(A, b, w, settings, backend=name), args.repeat)
        t_kde = _best_of(lambda: mod.kde_sum(k, k, 0.25), args.repeat)
        results[name] = (t_fit, t_kde)
        print(f"{name:>7}: wlasso fit {t_fit * 1e3:9.3f} ms   kde 600x600 {t_kde * 1e3:9.3f} ms")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup: wlasso {py[0] / cy[0]:.1f}x, kde {py[1] / cy[1]:.1f}x")
        x_py = fit_wlasso(A, b, w, settings, backend="python")
        x_cy = fit_wlasso(A, b, w, settings, backend="cython")
        print(f"max coefficient difference between backends: {np.max(np.abs(x_py - x_cy)):.2e}")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
