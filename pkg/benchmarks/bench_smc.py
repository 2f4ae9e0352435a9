#!/usr/bin/env python
"""Compare the numba and numpy propagation backends.

Times full ``smc_run`` calls on simulated data at a few network sizes and
checks both backends return the same estimate for the same seed.

    python benchmarks/bench_smc.py --nodes 15 40 --particles 200 2000
"""

import argparse
import math
import time

import numpy as np

from dmc_infer._accel import NUMBA_AVAILABLE
from dmc_infer.dmc import DmcParams, simulate
from dmc_infer.smc import smc_run


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nodes", type=int, nargs="+", default=[15, 40])
    ap.add_argument("--particles", type=int, nargs="+", default=[200, 2000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    backends = ["numba", "numpy"] if NUMBA_AVAILABLE else ["numpy"]
    m = DmcParams(0.7, 0.7)
    print(f"{'nodes':>5} {'N':>6} " + " ".join(f"{b + ' ms':>10}" for b in backends) + f" {'speedup':>8} agree")
    for nodes in args.nodes:
        h = simulate(m, nodes - 2, np.random.default_rng(args.seed))
        for n_particles in args.particles:
            times, estimates = {}, {}
            for b in backends:
                # first call compiles (numba) and fills the encode cache
                estimates[b] = smc_run(h.graph, h.forest, m, n_particles, args.seed,
                                       threads=args.threads, backend=b).log_estimate
                times[b] = best_of(lambda: smc_run(h.graph, h.forest, m, n_particles, args.seed,
                                                   threads=args.threads, backend=b), args.repeat)
            speedup = times["numpy"] / times["numba"] if "numba" in times else float("nan")
            agree = all(math.isclose(e, estimates["numpy"], rel_tol=1e-12) for e in estimates.values())
            cols = " ".join(f"{times[b] * 1e3:10.2f}" for b in backends)
            print(f"{nodes:5d} {n_particles:6d} {cols} {speedup:8.2f} {agree}")


if __name__ == "__main__":
    main()
