#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallback.

Usage:  python benchmarks/bench_kernels.py [--replicates R] [--steps K]

Times the two hot loops (batched Euler-Maruyama stepping and the dual-
process Gillespie batch) on the Figure-1 configuration.  The compiled
section is skipped with a note when `wfdual._kernels._speedups` has not
been built (see setup_speedups.py).
"""

import argparse
import importlib
import time

import numpy as np

from wfdual._kernels import _pure, make_kernel_model
from wfdual.diffusion import locus_streams
from wfdual.dual import RateTable
from wfdual.kfun import TwoLocusOracle
from wfdual.model import ModelParams


def fig1_params():
    J = np.zeros((4, 4))
    J[0, 2] = J[2, 0] = 2.0
    J[1, 3] = J[3, 1] = 2.0
    return ModelParams.make((2, 2), [[0.8, 0.8], [0.8, 0.8]], J=J)


def bench_em(mod, params, replicates, steps, seed=0):
    km = make_kernel_model(params)
    X = np.tile([0.5, 0.5, 0.5, 0.5], (replicates, 1))
    rngs = locus_streams(params, seed)
    start = time.perf_counter()
    mod.em_advance(km, X, steps, 1e-3, rngs, 1e-12)
    elapsed = time.perf_counter() - start
    return elapsed, float((X[:, 0] * X[:, 2]).mean())


def bench_gillespie(mod, params, oracle, replicates, seed=0, warm_table=None):
    table = warm_table if warm_table is not None else RateTable(params, oracle)
    sid = table.state_id(np.array([1, 0, 1, 0]))
    start = time.perf_counter()
    finals, truncated, counts = mod.gillespie_finals(table, sid, 0.5, seed, replicates, 50)
    elapsed = time.perf_counter() - start
    return elapsed, float(counts.mean()), table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=20000)
    parser.add_argument("--steps", type=int, default=500)
    args = parser.parse_args()

    params = fig1_params()
    oracle = TwoLocusOracle(params)
    try:
        speedups = importlib.import_module("wfdual._kernels._speedups")
    except ImportError:
        speedups = None

    print(f"configuration: Fig-1 two-locus model, {args.replicates} replicates")
    print(f"{'kernel':<34}{'pure':>12}{'compiled':>12}{'speedup':>10}")

    t_pure, m_pure = bench_em(_pure, params, args.replicates, args.steps)
    if speedups is not None:
        t_fast, m_fast = bench_em(speedups, params, args.replicates, args.steps)
        assert abs(m_pure - m_fast) < 0.02, "backends disagree statistically"
        print(f"{'em_advance (' + str(args.steps) + ' steps)':<34}{t_pure:>10.2f} s{t_fast:>10.2f} s{t_pure / t_fast:>9.1f}x")
    else:
        print(f"{'em_advance (' + str(args.steps) + ' steps)':<34}{t_pure:>10.2f} s{'not built':>12}")

    # warm the rate table first so the comparison isolates the stepping loop
    _, _, table = bench_gillespie(_pure, params, oracle, max(2000, args.replicates // 10))
    t_pure, ev_pure, table = bench_gillespie(_pure, params, oracle, args.replicates, warm_table=table)
    if speedups is not None:
        t_fast, ev_fast, _ = bench_gillespie(speedups, params, oracle, args.replicates, warm_table=table)
        assert ev_pure == ev_fast, "backends diverged on identical seeds"
        print(f"{'gillespie_finals (t = 0.5)':<34}{t_pure:>10.2f} s{t_fast:>10.2f} s{t_pure / t_fast:>9.1f}x")
    else:
        print(f"{'gillespie_finals (t = 0.5)':<34}{t_pure:>10.2f} s{'not built':>12}")
    print(f"mean events per dual path: {ev_pure:.1f}")


if __name__ == "__main__":
    main()
