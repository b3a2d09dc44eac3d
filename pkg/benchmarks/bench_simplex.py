"""Compare the compiled and pure-Python simplex kernels on the same LPs.

Runs full transport problems between random point clouds and one sparse
multiscale level, checks that both backends return identical flows and
prints wall times.  Usage: ``python3 benchmarks/bench_simplex.py [--sizes 20,40,80]``.
"""

import argparse
import time

import numpy as np

from msot import _backend
from msot.lp_core import SolverOptions, solve_transport
from msot.measure import CostSpec


def random_instance(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((n, 2)), rng.random((n, 2))
    a, b = rng.random(n) + 0.1, rng.random(n) + 0.1
    a /= a.sum()
    b = b / b.sum() * a.sum()
    rows = np.repeat(np.arange(n), n)
    cols = np.tile(np.arange(n), n)
    costs = CostSpec(2.0).matrix(x, y).ravel()
    return a, b, rows, cols, costs


def timed(backend, inst):
    t0 = time.perf_counter()
    plan = solve_transport(*inst, SolverOptions(backend=backend))
    return time.perf_counter() - t0, plan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="20,40,80")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    backends = sorted(_backend.BACKENDS)
    if "cython" not in backends:
        print("compiled kernel not built; only the Python kernel is available")
    print(f"{'n':>6} {'arcs':>8} " + " ".join(f"{b:>12}" for b in backends) + "   speedup  same")
    for n in [int(s) for s in args.sizes.split(",")]:
        times = {b: [] for b in backends}
        plans = {}
        for r in range(args.repeats):
            inst = random_instance(n, r)
            for b in backends:
                t, plans[b] = timed(b, inst)
                times[b].append(t)
        med = {b: float(np.median(v)) for b, v in times.items()}
        same = all(np.array_equal(plans[b].mass, plans[backends[0]].mass) for b in backends)
        speed = med["python"] / med["cython"] if "cython" in med else float("nan")
        print(f"{n:>6} {n * n:>8} " + " ".join(f"{med[b]:>11.4f}s" for b in backends)
              + f"   {speed:7.1f}x  {same}")


if __name__ == "__main__":
    main()
