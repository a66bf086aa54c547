"""Compare the compiled best-reply kernels with the numpy fallback.

Workload: the Figure 3 population (194 stations in 3 clusters, sigma 0.027)
simulated for 77 days, plus a single synchronous best-reply sweep.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from petrolmfg import ClusterParams, Population
from petrolmfg import _fallback

try:
    from petrolmfg import _ckernels
except ImportError:  # extension not built
    _ckernels = None

FIG3 = [ClusterParams(3.912, 5.186, 2.021, 2.210),
        ClusterParams(10.144, 0.562, 7.192, 1.701),
        ClusterParams(11.191, 0.357, 0.574, 1.654)]


def workload(days):
    pop = Population.from_counts(FIG3, [19, 79, 96], 0.027)
    x0 = np.random.default_rng(0).uniform(1.7, 2.0, pop.m)
    a, b, g, d = (np.ascontiguousarray(v) for v in pop.agent_params)
    return (a, b, g, d, np.ascontiguousarray(pop.sigmas), x0), days


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--days", type=int, default=77)
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args()

    (a, b, g, d, s, x0), days = workload(args.days)
    impls = [("numpy", _fallback)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for name, mod in impls:
        sweep = best_of(lambda: mod.best_replies(a, b, g, d, s, float(x0.mean()), x0, args.tol),
                        args.repeat)
        sim = best_of(lambda: mod.simulate_prices(a, b, g, d, s, x0, days, args.tol), args.repeat)
        results[name] = (sweep, sim, mod.simulate_prices(a, b, g, d, s, x0, days, args.tol))

    print(f"m = {len(x0)} stations, {days} days, root tol {args.tol:g}")
    print(f"{'backend':<8} {'one sweep':>12} {'simulation':>12}")
    for name, (sweep, sim, _) in results.items():
        print(f"{name:<8} {sweep * 1e6:>10.1f}us {sim * 1e3:>10.2f}ms")
    if "cython" in results:
        np_sweep, np_sim, np_traj = results["numpy"]
        c_sweep, c_sim, c_traj = results["cython"]
        print(f"speed-up: sweep x{np_sweep / c_sweep:.1f}, simulation x{np_sim / c_sim:.1f}; "
              f"max |difference| {np.max(np.abs(np_traj - c_traj)):.1e}")
    else:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
