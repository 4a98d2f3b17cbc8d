"""Throughput comparison of the compiled and pure-Python stepping kernels.

Usage:
    python benchmarks/bench_engine.py [--steps N]

Both engines consume identical normal buffers and produce bit-identical
results; this script measures how many path-steps per second each one
sustains on the three kernels, and projects the wall time of the large
long-run statistics runs.
"""
import argparse
import time

import numpy as np

from vertgame.engine import (
    ACC_LEN,
    HAVE_COMPILED,
    get_kernels,
    make_spec,
    path_generator,
)
from vertgame.equilibrium import tatonnement
from vertgame.model import load_config


def bench(kern, name, spec, z):
    out = {}
    state = np.array([3.0, 0.0, 0.0])
    acc = np.zeros(ACC_LEN)
    hist = np.zeros((2, 200), dtype=np.int64)
    t0 = time.perf_counter()
    kern.run_stats_chunk(spec, z, state, acc, hist, 1.5, 0.025)
    out["stats"] = len(z) / (time.perf_counter() - t0)

    state = np.array([3.0, 0.0, 1.0, 0.0, 0.0])
    t0 = time.perf_counter()
    kern.run_payoff_chunk(spec, z, state)
    out["payoff"] = len(z) / (time.perf_counter() - t0)

    state = np.array([3.0, 0.0, 0.0])
    cap = 4096
    ev = (np.zeros(cap), np.zeros(cap, dtype=np.int64), np.zeros(cap), np.zeros(cap))
    n_ev = np.zeros(1, dtype=np.int64)
    xs = np.zeros(len(z) // 1000 + 1)
    t0 = time.perf_counter()
    kern.run_path_chunk(spec, z, state, 0.0, *ev, n_ev, xs, 1000)
    out["path"] = len(z) / (time.perf_counter() - t0)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=4_000_000)
    ap.add_argument("--config", default="configs/table2.toml")
    args = ap.parse_args()

    params = load_config(args.config)
    eqm = tatonnement(params, branch="generic")
    spec = make_spec(params, eqm.strategies, 1.0 / 365.0)
    z = path_generator(0, 1, 0).standard_normal(args.steps)

    engines = [("python", get_kernels("python"))]
    if HAVE_COMPILED:
        engines.append(("compiled", get_kernels("compiled")))
    results = {}
    for name, kern in engines:
        n = args.steps if name == "compiled" else min(args.steps, 400_000)
        results[name] = bench(kern, name, spec, z[:n])

    print(f"{'kernel':<10}" + "".join(f"{n:>16}" for n, _ in engines))
    for kernel in ("stats", "payoff", "path"):
        row = f"{kernel:<10}"
        for name, _ in engines:
            row += f"{results[name][kernel]:>13.3g}/s"
        print(row)
    if HAVE_COMPILED:
        speedup = results["compiled"]["stats"] / results["python"]["stats"]
        rate = results["compiled"]["stats"]
        eta = 2e7 * 365 / rate
        print(f"\ncompiled/python speedup (stats kernel): {speedup:.0f}x")
        print(f"single-core time for 2e7 simulated years at dt=1/365: {eta:.0f}s")


if __name__ == "__main__":
    main()
