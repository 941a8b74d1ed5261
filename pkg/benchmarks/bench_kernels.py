"""Time the compiled kernels against their pure-Python twins.

Both backends run the same workload with the same seed and the outputs are
checked for equality before the timings are reported.

    python benchmarks/bench_kernels.py [--scale 1.0] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import platform
import time

import numpy as np

from loopmc import kernels
from loopmc.annealing import ais_gibbs_baseline
from loopmc.bp import run_bp
from loopmc.loopchain import build_moveset, run_loop_chain
from loopmc.loops import weight_tables
from loopmc.model import degree3_transform, gen_glassy_ising
from loopmc.worm import WormParams, sample_2regular_masks, worm_log_weights


def _time(fn, repeats=3):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(scale: float):
    grid = gen_glassy_ising(3, 0.5, 0.5, 0.0, seed=0)
    tm, _ = degree3_transform(grid, "path")
    fp_t = run_bp(tm)
    fp_g = run_bp(grid)
    log_mag = worm_log_weights(fp_t, tm, 1.0)
    moves = build_moveset(grid, fp_g)
    tables = weight_tables(fp_g, grid)

    n_worm = max(1, int(200 * scale))
    n_loop = max(1, int(2000 * scale))
    n_gibbs = max(1, int(20 * scale))

    def worm(backend):
        params = WormParams(N=20, T=1000)
        masks, fails, trials = sample_2regular_masks(tm, log_mag, params, n_worm, seed=1,
                                                     backend=backend)
        return masks, (fails, trials)

    def loop(backend):
        return run_loop_chain(grid, moves, tables, 1.0, n_loop, 1000, 10, seed=2, backend=backend)

    def gibbs(backend):
        rep = ais_gibbs_baseline(grid, schedule_points=20, samples=n_gibbs, sweeps_per_point=10,
                                 seed=3, record_timing=False, backend=backend)
        return rep.log_abs_estimate

    return {"worm_batch": worm, "loop_chain": loop, "gibbs_ais": gibbs}


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply the workload sizes")
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not available; build with pip install -e .")

    results = []
    print(f"{'kernel':<12} {'compiled s':>11} {'python s':>10} {'speedup':>8}  match")
    for name, fn in workloads(args.scale).items():
        tc, oc = _time(lambda: fn(kernels.compiled_backend))
        tp, op = _time(lambda: fn(kernels.python_backend), repeats=1)
        ok = _same(oc, op)
        results.append({"kernel": name, "compiled_s": tc, "python_s": tp, "speedup": tp / tc,
                        "outputs_match": ok})
        print(f"{name:<12} {tc:11.4f} {tp:10.3f} {tp / tc:8.1f}  {ok}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"python": platform.python_version(), "scale": args.scale,
                       "results": results}, fh, indent=1)


if __name__ == "__main__":
    main()
