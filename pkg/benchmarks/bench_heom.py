#!/usr/bin/env python3
"""Benchmark the compiled hierarchy kernel against the numpy fallback.

Runs the same propagation through both backends over a range of truncation
depths, reports wall times and speedups, and checks that the trajectories
agree to round-off (the two implementations share only the table layout).
"""

import argparse
import time

import numpy as np

from qprobe.core import ModelParams, PERPENDICULAR_Z, coupling_operator, density_from_bloch
from qprobe.heom import HeomConfig, compiled_core_available, heom_propagate, hierarchy_pairs


def run_case(depth: int, horizon: float, step: float, repeats: int):
    config = HeomConfig(
        model=ModelParams(delta=1.0, gamma_env=1.0, coupling=0.1),
        coupling=coupling_operator(PERPENDICULAR_Z),
        depth=depth,
        step=step,
        horizon=horizon,
        rho0=density_from_bloch([0.0, 0.0, 1.0]),
    )
    stride = int(round(horizon / step)) or 1
    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and not compiled_core_available():
            continue
        best = np.inf
        for _ in range(repeats):
            start = time.perf_counter()
            traj = heom_propagate(config, output_stride=stride, backend=backend)
            best = min(best, time.perf_counter() - start)
        results[backend] = (best, traj)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--horizon", type=float, default=20.0)
    parser.add_argument("--step", type=float, default=0.005)
    parser.add_argument("--depths", type=int, nargs="+", default=[4, 8, 12, 16, 24])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    n_steps = int(round(args.horizon / args.step))
    print(f"propagation: {n_steps} RK4 steps over t in [0, {args.horizon:g}], step {args.step:g}")
    if not compiled_core_available():
        print("compiled core not available; timing the python backend only")
    header = f"{'depth':>5} {'ADOs':>5} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8} {'max |diff|':>11}"
    print(header)
    print("-" * len(header))
    for depth in args.depths:
        results = run_case(depth, args.horizon, args.step, args.repeats)
        t_py, traj_py = results["python"]
        n_ados = len(hierarchy_pairs(depth, symmetric=True))
        if "compiled" in results:
            t_c, traj_c = results["compiled"]
            diff = float(np.max(np.abs(traj_py.values - traj_c.values)))
            print(
                f"{depth:>5} {n_ados:>5} {t_py:>11.3f} {t_c:>13.4f} {t_py / t_c:>8.1f} {diff:>11.1e}"
            )
        else:
            print(f"{depth:>5} {n_ados:>5} {t_py:>11.3f} {'-':>13} {'-':>8} {'-':>11}")


if __name__ == "__main__":
    main()
