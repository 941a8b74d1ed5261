"""Grid-model sweeps comparing BP, the two loop-corrected estimators and
annealed Gibbs sampling against exhaustive ground truth."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .annealing import (AnnealSchedule, ais_gibbs_baseline, combine_bp_mcmc, estimate_z2loop,
                        estimate_zloop, practical_worm_params)
from .bp import run_bp
from .errors import DegenerateMarginal, NegativeSeries, SignCollapse
from .loopchain import LoopChainParams
from .model import (PairwiseModel, degree3_transform, exact_partition, gen_glassy_ising,
                    gen_hardcore)

KINDS = ("ising_nofield", "ising_field", "hardcore")
METHODS = ("bp", "mcmc-bp-2reg", "mcmc-bp-whole", "gibbs")
STATUSES = ("ok", "bp_nonconverged", "sign_collapse", "timeout")


def default_sweep(kind: str) -> list[float]:
    if kind == "hardcore":
        return [0.5 * k for k in range(1, 17)]
    return [round(0.1 * k, 1) for k in range(1, 21)]


@dataclass
class ExperimentConfig:
    """Sweep definition.

    ``sweep`` holds mean couplings (Ising kinds) or fugacities (hard-core);
    left as ``None`` it defaults to 0.1..2.0 in steps of 0.1, or fugacities
    0.5..8 in steps of 0.5. ``T`` and ``s`` are the shared chain length and
    per-stage sample count.
    """

    kind: str = "ising_nofield"
    sweep: list | None = None
    models_per_point: int = 20
    methods: list = field(default_factory=lambda: list(METHODS))
    seed: int = 0
    side: int = 4
    coupling_std: float = 0.5
    field_std: float = 0.5
    T: int = 1000
    s: int = 100
    loop_beta0: float = 8.0
    loop_stages: int = 20
    loop_thin: int = 50
    sign_samples: int = 400
    bp_damping: float = 0.5
    bp_tol: float = 1e-10
    bp_max_iters: int = 10_000
    timeout: float | None = None
    record_timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.sweep is None:
            self.sweep = default_sweep(self.kind)
        if not self.sweep:
            raise ValueError("sweep must be nonempty")
        if self.models_per_point < 1:
            raise ValueError("models_per_point must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        self.sweep = [float(x) for x in self.sweep]
        self.methods = list(self.methods)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))


@dataclass
class ResultRow:
    kind: str
    strength: float
    model_seed: int
    method: str
    log_z_exact: float
    log_z_approx: float
    rel_error: float
    wall_time: float
    status: str = "ok"


def rel_error(exact: float, approx: float) -> float:
    if not math.isfinite(approx):
        return math.nan
    return abs(exact - approx) / abs(exact)


def model_seed_for(config_seed: int, point: int, j: int) -> int:
    ss = np.random.SeedSequence([int(config_seed), int(point), int(j)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_model(cfg: ExperimentConfig, strength: float, model_seed: int) -> PairwiseModel:
    if cfg.kind == "ising_nofield":
        return gen_glassy_ising(cfg.side, strength, cfg.coupling_std, 0.0, model_seed)
    if cfg.kind == "ising_field":
        return gen_glassy_ising(cfg.side, strength, cfg.coupling_std, cfg.field_std, model_seed)
    return gen_hardcore(cfg.side, strength)


def _run_method(cfg: ExperimentConfig, method: str, model: PairwiseModel, seed) -> tuple[float, str]:
    bp_kw = dict(damping=cfg.bp_damping, tol=cfg.bp_tol, max_iters=cfg.bp_max_iters)
    if method == "bp":
        fp = run_bp(model, **bp_kw)
        return fp.bethe_log_z, "ok" if fp.converged else "bp_nonconverged"
    if method == "mcmc-bp-2reg":
        tm, _vm = degree3_transform(model, "path")
        fp = run_bp(tm, **bp_kw)
        status = "ok" if fp.converged else "bp_nonconverged"
        rep = estimate_z2loop(tm, fp, AnnealSchedule.linear(tm.n), s1=cfg.s, s2=cfg.sign_samples,
                              worm_params=practical_worm_params(tm, cfg.T), seed=seed,
                              record_timing=False)
        return combine_bp_mcmc(fp, rep), status
    if method == "mcmc-bp-whole":
        fp = run_bp(model, **bp_kw)
        status = "ok" if fp.converged else "bp_nonconverged"
        rep = estimate_zloop(model, fp, AnnealSchedule.geometric_descent(cfg.loop_beta0, cfg.loop_stages),
                             s0=cfg.s, s1=cfg.s, s2=cfg.sign_samples,
                             chain_params=LoopChainParams(burn_in=cfg.T, thin=cfg.loop_thin),
                             seed=seed, record_timing=False)
        return combine_bp_mcmc(fp, rep), status
    # same ladder length and elementary-update budget as the 2-regular estimator
    tm, _vm = degree3_transform(model)
    sweeps = max(1, math.ceil(cfg.T / model.n))
    rep = ais_gibbs_baseline(model, schedule_points=tm.n + 1, samples=cfg.s,
                             sweeps_per_point=sweeps, seed=seed, record_timing=False)
    return rep.log_abs_estimate, "ok"


def _run_task(args) -> list[ResultRow]:
    cfg, point, j = args
    strength = cfg.sweep[point]
    mseed = model_seed_for(cfg.seed, point, j)
    model = make_model(cfg, strength, mseed)
    exact = exact_partition(model)
    rows = []
    for method in cfg.methods:
        seed = np.random.SeedSequence([mseed, METHODS.index(method), int(cfg.seed)])
        t0 = time.perf_counter()
        try:
            approx, status = _run_method(cfg, method, model, seed)
        except SignCollapse:
            approx, status = math.nan, "sign_collapse"
        except NegativeSeries:
            approx, status = math.nan, "sign_collapse"
        except DegenerateMarginal:
            approx, status = math.nan, "bp_nonconverged"
        elapsed = time.perf_counter() - t0
        if cfg.timeout is not None and elapsed > cfg.timeout:
            status = "timeout"
        rows.append(ResultRow(cfg.kind, strength, mseed, method, exact, approx,
                              rel_error(exact, approx), elapsed if cfg.record_timing else 0.0,
                              status))
    return rows


def worker_count() -> int:
    raw = os.environ.get("LOOPMC_THREADS")
    if not raw:
        return 1
    return max(1, int(raw))


def run_experiment(cfg: ExperimentConfig, csv_path=None, workers: int | None = None) -> list[ResultRow]:
    """Run the sweep; rows come back (and are written) in canonical order."""
    tasks = [(cfg, p, j) for p in range(len(cfg.sweep)) for j in range(cfg.models_per_point)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    order = {m: i for i, m in enumerate(METHODS)}
    rows = [r for c in chunks for r in c]
    rows.sort(key=lambda r: (r.kind, r.strength, r.model_seed, order[r.method]))
    if csv_path is not None:
        write_csv(csv_path, rows)
    return rows


# --------------------------------------------------------------------------
# CSV

COLUMNS = [f.name for f in fields(ResultRow)]
_FLOAT_COLS = {"strength", "log_z_exact", "log_z_approx", "rel_error", "wall_time"}


def dumps_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([repr(float(getattr(r, c))) if c in _FLOAT_COLS else getattr(r, c) for c in COLUMNS])
    return buf.getvalue()


def loads_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty CSV") from None
    if header != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(COLUMNS)} fields")
        vals = dict(zip(COLUMNS, rec))
        try:
            row = ResultRow(
                kind=vals["kind"], strength=float(vals["strength"]),
                model_seed=int(vals["model_seed"]), method=vals["method"],
                log_z_exact=float(vals["log_z_exact"]), log_z_approx=float(vals["log_z_approx"]),
                rel_error=float(vals["rel_error"]), wall_time=float(vals["wall_time"]),
                status=vals["status"],
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if row.status not in STATUSES:
            raise ValueError(f"line {lineno}: unknown status {row.status!r}")
        rows.append(row)
    return rows


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dumps_csv(rows))


def read_csv(path) -> list[ResultRow]:
    with open(path) as fh:
        return loads_csv(fh.read())


# --------------------------------------------------------------------------
# summaries and plots

def summarize(rows, only_ok: bool = True) -> dict:
    """``{(kind, method, strength): (mean, stderr, count)}`` of rel_error."""
    groups: dict = {}
    for r in rows:
        if only_ok and r.status != "ok":
            continue
        if not math.isfinite(r.rel_error):
            continue
        groups.setdefault((r.kind, r.method, r.strength), []).append(r.rel_error)
    out = {}
    for key, vals in sorted(groups.items()):
        a = np.asarray(vals)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
        out[key] = (float(a.mean()), se, int(a.size))
    return out


def emit_plots(csv_path, out_dir=None) -> list[str]:
    """One SVG per experiment kind: mean rel_error against strength per method."""
    rows = read_csv(csv_path)
    if not rows:
        raise ValueError("CSV has no rows")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = out_dir or os.path.dirname(os.path.abspath(csv_path))
    summary = summarize(rows)
    written = []
    labels = {"ising_nofield": "Ising, no field", "ising_field": "Ising with fields",
              "hardcore": "Hard-core"}
    for kind in sorted({r.kind for r in rows}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        for method in METHODS:
            pts = sorted((s, v) for (k, m, s), v in summary.items() if k == kind and m == method)
            if not pts:
                continue
            xs = [p[0] for p in pts]
            ax.errorbar(xs, [p[1][0] for p in pts], yerr=[p[1][1] for p in pts],
                        marker="o", ms=3, capsize=2, label=method)
        ax.set_xlabel("fugacity" if kind == "hardcore" else "mean interaction strength")
        ax.set_ylabel("relative log Z error")
        ax.set_yscale("log")
        ax.set_title(labels.get(kind, kind))
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{kind}.svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
