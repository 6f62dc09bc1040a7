#!/usr/bin/env python3
"""Benchmark the compiled simulation kernel against the pure-Python fallback.

Runs the same workload through both backends (selected via the
RANDOMKIT_BACKEND environment variable, which the engine reads per call),
verifies their outputs are byte-identical, and reports assignment throughput.

Usage:
    python3 benchmarks/bench_backends.py [--n 40] [--nsim 20000] [--repeat 3]
"""

import argparse
import os
import time

from randomkit.config import parse_proc, parse_weights
from randomkit.engine import simulate

W11 = parse_weights([1, 1])
W4321 = parse_weights([4, 3, 2, 1])


def workload(n):
    return [
        parse_proc("CRD", W11),
        parse_proc("BSD:b=3", W11),
        parse_proc("EBCD:p=2/3", W11),
        parse_proc("BBCD:gamma=1", W11),
        parse_proc("RAND", W4321, n=n),
        parse_proc("MWUD:alpha=2", W4321),
        parse_proc("DLUD:a=2", W4321),
        parse_proc("MaxEnt:eta=0.5", W4321),
        parse_proc("DBCD:gamma=2", W4321),
    ]


def run(backend, cfgs, n, nsim, seed, repeat):
    os.environ["RANDOMKIT_BACKEND"] = backend
    best = float("inf")
    srs = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        srs = simulate(cfgs, n=n, nsim=nsim, seed=seed)
        best = min(best, time.perf_counter() - t0)
    return best, srs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--nsim", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=314159)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    try:
        from randomkit import _engine_cy  # noqa: F401
        have_compiled = True
    except ImportError:
        have_compiled = False

    cfgs = workload(args.n)
    total = len(cfgs) * args.n * args.nsim
    print(f"workload: {len(cfgs)} designs x n={args.n} x nsim={args.nsim} "
          f"({total:,} assignments), best of {args.repeat}")

    t_py, srs_py = run("python", cfgs, args.n, args.nsim, args.seed, args.repeat)
    print(f"  python   {t_py:8.3f}s   {total / t_py / 1e6:7.2f} M assignments/s")

    if not have_compiled:
        print("  compiled backend not installed; skipping comparison")
        return

    t_cy, srs_cy = run("compiled", cfgs, args.n, args.nsim, args.seed, args.repeat)
    print(f"  compiled {t_cy:8.3f}s   {total / t_cy / 1e6:7.2f} M assignments/s")
    print(f"  speedup  {t_py / t_cy:8.1f}x")

    mismatches = [
        py.label
        for py, cy in zip(srs_py, srs_cy)
        if py.assignments.tobytes() != cy.assignments.tobytes()
        or py.probs.tobytes() != cy.probs.tobytes()
    ]
    if mismatches:
        raise SystemExit(f"backends disagree on: {', '.join(mismatches)}")
    print("  outputs byte-identical across backends")


if __name__ == "__main__":
    main()
