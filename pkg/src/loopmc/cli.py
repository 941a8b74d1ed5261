"""Command-line entry point (``loopmc``)."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .annealing import (AnnealSchedule, ais_gibbs_baseline, combine_bp_mcmc, estimate_z2loop,
                        estimate_zloop, pilot_s2, practical_worm_params, theorem2_params)
from .bp import edge_weight_magnitudes, read_fixed_point, run_bp, write_fixed_point
from .errors import LoopMCError
from .experiment import ExperimentConfig, emit_plots, run_experiment
from .loopchain import LoopChainParams, build_moveset, run_loop_chain
from .loops import EdgeSubgraph, classify_subgraph, ls_oracle, weight_tables
from .model import (degree3_transform, exact_partition, gen_glassy_ising, gen_hardcore,
                    read_model, write_model)
from .worm import default_worm_params, rows_to_ints, sample_2regular_masks, worm_log_weights


def _cmd_gen_model(a):
    if a.kind == "ising":
        model = gen_glassy_ising(a.side, a.mean, a.std, a.field_std, a.seed)
    else:
        model = gen_hardcore(a.side, a.fugacity)
    write_model(a.out, model)
    print(f"wrote {a.out}: n={model.n} m={model.m}")


def _cmd_bp(a):
    model = read_model(a.model)
    fp = run_bp(model, damping=a.damping, max_iters=a.max_iters, tol=a.tol)
    if a.out:
        write_fixed_point(a.out, fp)
    print(f"bethe_log_z {float(fp.bethe_log_z)!r}")
    print(f"converged {fp.converged} iterations {fp.iterations} residual {fp.residual:.3e}")
    return 0 if fp.converged else 3


def _cmd_oracle(a):
    model = read_model(a.model)
    if a.mode == "exact":
        print(f"log_abs {float(exact_partition(model))!r} sign 1")
        return 0
    if not a.fixed_point:
        raise SystemExit("--fixed-point is required for modes full and 2loop")
    fp = read_fixed_point(a.fixed_point)
    res = ls_oracle(model, fp, "full" if a.mode == "full" else "two_regular")
    print(f"log_abs {float(res.log_abs)!r} sign {res.sign}")
    return 0


def _write_samples(path, model, masks, log_w):
    ints = rows_to_ints(masks)
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["bitmask", "log_abs_weight", "class"])
        for mk, lw in zip(ints, log_w):
            cls = classify_subgraph(EdgeSubgraph.from_mask(model, mk)).value
            w.writerow([hex(mk), repr(float(lw)), cls])
    finally:
        if path:
            out.close()


def _cmd_worm_sample(a):
    model = read_model(a.model)
    fp = read_fixed_point(a.fp)
    choice = default_worm_params(model, a.delta)
    params = choice.select(a.mode)
    if a.T is not None:
        params = type(params)(params.N, a.T)
    log_mag = worm_log_weights(fp, model, 1.0)
    masks, fails, trials = sample_2regular_masks(model, log_mag, params, a.samples, seed=a.seed)
    lw = np.where(masks.astype(bool), log_mag[None, :], 0.0).sum(axis=1)
    _write_samples(a.out, model, masks, lw)
    print(f"samples {a.samples} N {params.N} T {params.T} failures {fails} trials {trials}",
          file=sys.stderr)


def _cmd_loop_sample(a):
    model = read_model(a.model)
    fp = read_fixed_point(a.fp)
    moves = build_moveset(model, fp, "min_weight" if a.basis == "min" else "fundamental")
    tables = weight_tables(fp, model)
    masks, la, _neg = run_loop_chain(model, moves, tables, a.beta, a.count, a.burn_in, a.thin, a.seed)
    _write_samples(a.out, model, masks, la)


def _cmd_estimate(a):
    model = read_model(a.model)
    seed = np.random.SeedSequence(a.seed)
    bp_seed, pilot_seed, run_seed = seed.spawn(3)
    out: dict = {"method": a.method}
    if a.method == "gibbs":
        tm, _ = degree3_transform(model)
        rep = ais_gibbs_baseline(model, schedule_points=a.stages or tm.n + 1, samples=a.samples,
                                 sweeps_per_point=max(1, math.ceil(a.T / model.n)), seed=run_seed)
        out.update(rep.to_dict())
        out["log_z"] = rep.log_abs_estimate
    elif a.method == "bp":
        fp = run_bp(model)
        out.update({"log_z": fp.bethe_log_z, "converged": fp.converged, "residual": fp.residual})
    elif a.method == "mcmc-bp-2reg":
        tm, _ = degree3_transform(model, "path")
        fp = run_bp(tm)
        _c, mag = edge_weight_magnitudes(fp, tm)
        worm = practical_worm_params(tm, a.T)
        s2, zeta = pilot_s2(tm, fp, worm, seed=pilot_seed, target_sd=a.eps / 4)
        bounds = theorem2_params(a.eps, a.nu, max(float(mag.min()), 1e-300), min(zeta, 0.49),
                                 tm.n, tm.m, tm.max_degree)
        sched = AnnealSchedule.linear(a.stages or tm.n)
        rep = estimate_z2loop(tm, fp, sched, s1=a.samples, s2=max(s2, a.sign_samples),
                              worm_params=worm, seed=run_seed)
        rep.params_used["theorem2_bounds"] = bounds
        rep.params_used["zeta_pilot"] = zeta
        out.update(rep.to_dict())
        out["bethe_log_z"] = fp.bethe_log_z
        out["log_z"] = combine_bp_mcmc(fp, rep)
    else:
        fp = run_bp(model)
        sched = AnnealSchedule.geometric_descent(a.beta0, a.stages or 20)
        rep = estimate_zloop(model, fp, sched, s0=a.samples, s1=a.samples, s2=a.sign_samples,
                             chain_params=LoopChainParams(burn_in=a.T, thin=a.thin), seed=run_seed)
        out.update(rep.to_dict())
        out["bethe_log_z"] = fp.bethe_log_z
        out["log_z"] = combine_bp_mcmc(fp, rep)
    text = json.dumps(out, indent=1, sort_keys=True, default=str)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text + "\n")
    print(f"log_z {float(out['log_z'])!r}")


def _cmd_experiment(a):
    if a.config:
        with open(a.config) as fh:
            cfg = ExperimentConfig.from_json(fh.read())
    else:
        kw = {"kind": a.kind, "models_per_point": a.models, "seed": a.seed, "T": a.T, "s": a.samples}
        if a.sweep:
            kw["sweep"] = [float(x) for x in a.sweep.split(",")]
        if a.methods:
            kw["methods"] = a.methods.split(",")
        cfg = ExperimentConfig(**kw)
    rows = run_experiment(cfg, csv_path=a.out)
    print(f"wrote {len(rows)} rows to {a.out}")


def _cmd_plot(a):
    for p in emit_plots(a.csv, a.out_dir):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopmc", description="BP plus loop-series MCMC estimators of log Z")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-model", help="write a grid model")
    g.add_argument("--kind", choices=["ising", "hardcore"], default="ising")
    g.add_argument("--side", type=int, default=4)
    g.add_argument("--mean", type=float, default=0.3)
    g.add_argument("--std", type=float, default=0.5)
    g.add_argument("--field-std", type=float, default=0.0)
    g.add_argument("--fugacity", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_model)

    b = sub.add_parser("bp", help="run belief propagation")
    b.add_argument("--model", required=True)
    b.add_argument("--damping", type=float, default=0.5)
    b.add_argument("--tol", type=float, default=1e-10)
    b.add_argument("--max-iters", type=int, default=10_000)
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bp)

    o = sub.add_parser("oracle", help="exhaustive loop series or log Z")
    o.add_argument("--model", required=True)
    o.add_argument("--fixed-point")
    o.add_argument("--mode", choices=["full", "2loop", "exact"], default="full")
    o.set_defaults(func=_cmd_oracle)

    w = sub.add_parser("worm-sample", help="draw 2-regular loops")
    w.add_argument("--model", required=True)
    w.add_argument("--fp", required=True)
    w.add_argument("--samples", type=int, default=1000)
    w.add_argument("--mode", choices=["theorem", "practical"], default="practical")
    w.add_argument("--delta", type=float, default=0.1)
    w.add_argument("--T", type=int, default=None, help="override steps per trial")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out")
    w.set_defaults(func=_cmd_worm_sample)

    lp = sub.add_parser("loop-sample", help="draw generalized loops")
    lp.add_argument("--model", required=True)
    lp.add_argument("--fp", required=True)
    lp.add_argument("--beta", type=float, default=1.0)
    lp.add_argument("--count", type=int, default=1000)
    lp.add_argument("--burn-in", type=int, default=1000)
    lp.add_argument("--thin", type=int, default=50)
    lp.add_argument("--basis", choices=["min", "fund"], default="min")
    lp.add_argument("--seed", type=int, default=0)
    lp.add_argument("--out")
    lp.set_defaults(func=_cmd_loop_sample)

    e = sub.add_parser("estimate", help="estimate log Z")
    e.add_argument("--model", required=True)
    e.add_argument("--method", choices=["bp", "mcmc-bp-2reg", "mcmc-bp-whole", "gibbs"], required=True)
    e.add_argument("--eps", type=float, default=0.2)
    e.add_argument("--nu", type=float, default=0.1)
    e.add_argument("--samples", type=int, default=100)
    e.add_argument("--T", type=int, default=1000)
    e.add_argument("--stages", type=int, default=None)
    e.add_argument("--beta0", type=float, default=8.0)
    e.add_argument("--thin", type=int, default=50)
    e.add_argument("--sign-samples", type=int, default=400)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=_cmd_estimate)

    x = sub.add_parser("experiment", help="run a grid sweep")
    x.add_argument("--config")
    x.add_argument("--kind", choices=["ising_nofield", "ising_field", "hardcore"], default="ising_nofield")
    x.add_argument("--sweep", help="comma-separated strengths")
    x.add_argument("--models", type=int, default=20)
    x.add_argument("--methods", help="comma-separated subset of bp,mcmc-bp-2reg,mcmc-bp-whole,gibbs")
    x.add_argument("--T", type=int, default=1000)
    x.add_argument("--samples", type=int, default=100)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_experiment)

    pl = sub.add_parser("plot", help="render SVG error curves from an experiment CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out-dir")
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except (LoopMCError, ValueError, OSError) as exc:
        print(f"loopmc: error: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
