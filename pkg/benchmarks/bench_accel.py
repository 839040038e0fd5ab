#!/usr/bin/env python3
"""Compare the numba and pure-numpy flavours of the inner loops.

Prints one JSON object: per kernel, the best-of-runs wall time of each
flavour and the speedup.  Numba compile time is excluded by a warm-up
call.  The rbf block result is why numba mode still routes rbf through
the numpy flavour.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from kcoreset import _hot


def best_time(fn, runs):
    fn()  # warm-up / compile
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(n, 8)), rng.normal(size=(500, 8))
    best = rng.random(n * 10)
    cand = rng.random(n * 10)
    sq = rng.random((n, 200))
    sets = np.stack([rng.choice(200, 5, replace=False) for _ in range(500)]).astype(np.int64)
    w = rng.random(n)
    G = rng.normal(size=(10, 4))
    G = G @ G.T
    table = rng.random(1 << 10)

    def run(flavour):
        kb = getattr(_hot, flavour + "_kernel_block")
        mu = getattr(_hot, flavour + "_min_update")
        sc = getattr(_hot, flavour + "_set_costs")
        bp = getattr(_hot, flavour + "_best_partition")
        return {
            "kernel_block_rbf": lambda: kb(X, Y, _hot.RBF, 2.0, 1, False),
            "kernel_block_poly": lambda: kb(X, Y, _hot.POLYNOMIAL, 1.0, 3, False),
            "min_update": lambda: mu(best.copy(), np.zeros(best.size, dtype=np.int64), cand, 1),
            "set_costs": lambda: sc(sq, sets, w, 2.0, np.zeros(len(sets))),
            "best_partition": lambda: bp(table, 10, 3),
        }
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_000, help="rows per kernel block")
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _hot.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    run = cases(args.n, args.seed)
    fast, slow = run("nb"), run("np")
    results = {}
    for name in fast:
        t_nb = best_time(fast[name], args.runs)
        t_np = best_time(slow[name], args.runs)
        results[name] = {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb}
    print(json.dumps({"n": args.n, "runs": args.runs, "results": results}, indent=2))


if __name__ == "__main__":
    main()
