"""Annealed estimators of loop-series sums and the Gibbs AIS baseline.

Both loop estimators write the target as a telescoping product of ratios of
tempered sums ``Z†(beta) = sum_F |w(F)|**beta`` and correct the sign
afterwards with the fraction ``kappa`` of negative-weight draws at
``beta = 1``:

* 2-regular loops: ``Z†(0) = 2**(m-n+1)`` is known and ``beta`` increases
  to 1; draws come from the worm sampler.
* All generalized loops: ``Z†(beta_0)`` at a large ``beta_0`` is estimated
  from the empirical mode, and ``beta`` decreases to 1; draws come from the
  cycle/path chain.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .bp import BPFixedPoint, edge_weight_magnitudes
from .errors import NegativeSeries, SignCollapse
from .loopchain import LoopChainParams, MoveSet, build_moveset, run_loop_chain
from .loops import weight_tables
from .model import PairwiseModel
from .rng import as_seed_sequence, kernel_seed, seed_entropy
from .worm import WormParams, sample_2regular_masks

SIGN_COLLAPSE_THRESHOLD = 0.02


@dataclass(frozen=True)
class AnnealSchedule:
    betas: tuple
    direction: str

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.size < 2:
            raise ValueError("schedule needs at least two temperatures")
        if b[-1] != 1.0:
            raise ValueError("schedule must end at beta = 1")
        d = np.diff(b)
        if self.direction == "increasing_to_1":
            if not np.all(d > 0):
                raise ValueError("betas must increase strictly")
        elif self.direction == "decreasing_to_1":
            if not np.all(d < 0):
                raise ValueError("betas must decrease strictly")
        else:
            raise ValueError(f"unknown direction {self.direction!r}")

    @classmethod
    def linear(cls, stages: int) -> "AnnealSchedule":
        """``beta_i = i / stages`` for ``i = 0..stages``."""
        if stages < 1:
            raise ValueError("stages must be >= 1")
        return cls(tuple(i / stages for i in range(stages + 1)), "increasing_to_1")

    @classmethod
    def geometric_descent(cls, beta0: float = 8.0, stages: int = 20) -> "AnnealSchedule":
        if not beta0 > 1 or stages < 1:
            raise ValueError("need beta0 > 1 and stages >= 1")
        b = np.geomspace(beta0, 1.0, stages + 1)
        b[-1] = 1.0
        return cls(tuple(float(x) for x in b), "decreasing_to_1")

    @property
    def stages(self) -> int:
        return len(self.betas) - 1


@dataclass
class EstimateReport:
    """Estimator output.

    ``log_abs_estimate`` and ``sign`` describe the estimated sum;
    ``stage_ratios`` holds each ``H_i`` and ``log_stage_ratios`` their logs.
    """

    method: str
    log_abs_estimate: float
    sign: int
    stage_ratios: list = field(default_factory=list)
    log_stage_ratios: list = field(default_factory=list)
    kappa: float = 0.0
    U_log: float | None = None
    params_used: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = "loopmc-estimate-report"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateReport":
        d = dict(d)
        d.pop("format", None)
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _sign_factor(kappa: float, threshold: float, report: EstimateReport):
    f = 1.0 - 2.0 * kappa
    if abs(f) < threshold:
        report.sign = 0 if f == 0 else (1 if f > 0 else -1)
        raise SignCollapse(f"|1 - 2 kappa| = {abs(f):.4g} below {threshold}", report)
    return math.log(abs(f)), (1 if f > 0 else -1)


def _log_mean_exp(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    top = np.max(x)
    if not np.isfinite(top):
        return float(top)
    return float(top + math.log(math.fsum(np.exp(x - top).tolist()) / x.size))


def _child_seeds(seed, k: int) -> tuple[list[int], dict]:
    ss = as_seed_sequence(seed)
    kids = ss.spawn(k)
    ks = [kernel_seed(c) for c in kids]
    return ks, {"master": seed_entropy(ss), "spawn_key": list(ss.spawn_key), "streams": ks}


# --------------------------------------------------------------------------
# 2-regular loops

def theorem2_params(eps: float, nu: float, w_min: float, zeta_guess: float,
                    n: int, m: int, max_degree: int) -> dict:
    """Sample and chain-length bounds that guarantee ``1 ± eps`` accuracy
    with probability ``1 - nu`` for the 2-regular estimator."""
    if not (0 < eps < 1 and 0 < nu < 1):
        raise ValueError("eps and nu must lie in (0, 1)")
    if not 0 < w_min <= 1:
        raise ValueError("w_min must lie in (0, 1]")
    if not 0 <= zeta_guess < 0.5:
        raise ValueError("zeta_guess must lie in [0, 1/2)")
    c = m - n + 1
    gap = 1.0 - 2.0 * zeta_guess
    s1 = math.ceil(18144 * n ** 2 / eps ** 2 / w_min * math.ceil(math.log(6 * n / nu)))
    s2 = math.ceil(18144 * zeta_guess / gap ** 2 / eps ** 2 * math.ceil(math.log(3 / nu)))
    N1 = math.ceil(1.2 * n * math.log(144 * n / (eps * w_min)))
    T1 = math.ceil(c * math.log(2) + 4 * max_degree * m * n ** 4 * math.log(48 * n / (eps * w_min)))
    N2 = math.ceil(1.2 * n * math.log(144 / (eps * gap)))
    T2 = math.ceil(c * math.log(2) + 4 * max_degree * m * n ** 4 * math.log(48 / (eps * gap)))
    return {"s1": s1, "s2": s2, "N1": N1, "T1": T1, "N2": N2, "T2": T2}


def practical_worm_params(model: PairwiseModel, T: int = 1000, delta: float = 1e-4) -> WormParams:
    """``N = ceil(1.2 n log(3/delta))`` trials of ``T`` steps."""
    return WormParams(math.ceil(1.2 * model.n * math.log(3.0 / delta)), int(T))


def _require_degree3(model):
    if model.max_degree > 3:
        raise ValueError("2-regular estimator needs maximum degree <= 3; apply degree3_transform")


def _loop_stats(masks: np.ndarray, log_mag: np.ndarray, neg: np.ndarray):
    """Per-draw ``log prod |w(e)|`` and negative-sign indicator."""
    m = masks.astype(bool)
    with np.errstate(invalid="ignore"):
        la = np.where(m, log_mag[None, :], 0.0).sum(axis=1)
    parity = (m & neg[None, :]).sum(axis=1) % 2
    return la, parity.astype(bool)


def pilot_s2(model: PairwiseModel, fp: BPFixedPoint, worm: WormParams, seed=None,
             pilot: int = 200, target_sd: float = 0.05, lo: int = 100, hi: int = 20000) -> tuple[int, float]:
    """Sign-sample count from a pilot estimate ``zeta_hat``.

    Chooses ``s2`` so the delta-method standard deviation of
    ``log|1 - 2 kappa|`` is about ``target_sd``. Returns ``(s2, zeta_hat)``.
    """
    corr, mag = edge_weight_magnitudes(fp, model)
    with np.errstate(divide="ignore"):
        log_mag = np.log(mag)
    masks, _f, _t = sample_2regular_masks(model, log_mag, worm, pilot, seed=seed)
    _la, negs = _loop_stats(masks, log_mag, corr < 0)
    z = float(negs.mean()) if pilot else 0.0
    gap = max(1.0 - 2.0 * z, 0.05)
    need = 4.0 * z * (1.0 - z) / (gap ** 2 * target_sd ** 2)
    return int(min(max(math.ceil(need), lo), hi)), z


def estimate_z2loop(model: PairwiseModel, fp: BPFixedPoint, schedule: AnnealSchedule | None = None,
                    s1: int = 100, s2: int = 400, worm_params: WormParams | None = None,
                    seed=None, sign_threshold: float = SIGN_COLLAPSE_THRESHOLD,
                    record_timing: bool = True) -> EstimateReport:
    """Annealed estimate of the 2-regular loop sum.

    Stage ``i`` draws ``s1`` loops at inverse temperature ``beta_i`` and
    averages ``|w(F)|**(beta_{i+1} - beta_i)``; ``s2`` draws at ``beta = 1``
    give ``kappa``. The default schedule is ``beta_i = i / n``.

    Raises
    ------
    SignCollapse
        If ``|1 - 2 kappa|`` falls below ``sign_threshold``; the partial
        report is attached.
    """
    _require_degree3(model)
    t0 = time.perf_counter()
    if schedule is None:
        schedule = AnnealSchedule.linear(model.n)
    if schedule.direction != "increasing_to_1" or schedule.betas[0] != 0.0:
        raise ValueError("2-regular estimator needs an increasing schedule starting at 0")
    if worm_params is None:
        worm_params = practical_worm_params(model)
    corr, mag = edge_weight_magnitudes(fp, model)
    with np.errstate(divide="ignore"):
        log_mag = np.log(mag)
    neg = corr < 0
    betas = schedule.betas
    K = schedule.stages
    streams, seeds = _child_seeds(seed, K + 1)
    H, logH = [], []
    failures = 0
    trials = 0
    for i in range(K):
        b, b_next = betas[i], betas[i + 1]
        lm = np.zeros(model.m) if b == 0 else b * log_mag
        masks, f, t = sample_2regular_masks(model, lm, worm_params, s1, seed=streams[i])
        failures += f
        trials += t
        la, _ = _loop_stats(masks, log_mag, neg)
        lh = _log_mean_exp((b_next - b) * la)
        logH.append(lh)
        H.append(math.exp(lh))
    if s2 > 0:
        masks, f, t = sample_2regular_masks(model, log_mag, worm_params, s2, seed=streams[K])
        failures += f
        trials += t
        _la, negs = _loop_stats(masks, log_mag, neg)
        kappa = float(negs.mean())
    else:
        kappa = 0.0
    anchor = model.cyclomatic_number * math.log(2.0)
    report = EstimateReport(
        method="mcmc-bp-2reg",
        log_abs_estimate=math.nan,
        sign=1,
        stage_ratios=H,
        log_stage_ratios=logH,
        kappa=kappa,
        U_log=None,
        params_used={"s1": s1, "s2": s2, "N": worm_params.N, "T": worm_params.T,
                     "betas": list(betas), "sign_threshold": sign_threshold,
                     "backend": kernels.BACKEND},
        seeds=seeds,
        diagnostics={"worm_failures": failures, "worm_trials": trials, "log_anchor": anchor,
                     "n": model.n, "m": model.m},
    )
    log_sign, sgn = _sign_factor(kappa, sign_threshold, report)
    report.log_abs_estimate = anchor + math.fsum(logH) + log_sign
    report.sign = sgn
    report.wall_time = time.perf_counter() - t0 if record_timing else 0.0
    return report


# --------------------------------------------------------------------------
# all generalized loops

def estimate_zloop(model: PairwiseModel, fp: BPFixedPoint, schedule: AnnealSchedule | None = None,
                   s0: int = 100, s1: int = 100, s2: int = 400,
                   chain_params: LoopChainParams | None = None, seed=None,
                   moves: MoveSet | None = None, sign_threshold: float = SIGN_COLLAPSE_THRESHOLD,
                   mode_floor: float = 0.05, record_timing: bool = True) -> EstimateReport:
    """Annealed estimate of the full loop series from a cold start.

    ``s0`` draws at ``beta_0`` locate the most frequent heavy loop ``F*``
    (maximum ``|w|``, ties by bitmask) and give
    ``U = (s0 / s*) |w(F*)|**beta_0`` with ``s*`` its count. Stages then
    descend to ``beta = 1`` as in :func:`estimate_z2loop`. A mode fraction
    ``s*/s0`` under ``mode_floor`` is flagged in ``diagnostics``.
    """
    t0 = time.perf_counter()
    if schedule is None:
        schedule = AnnealSchedule.geometric_descent()
    if schedule.direction != "decreasing_to_1":
        raise ValueError("full-loop estimator needs a decreasing schedule")
    if chain_params is None:
        chain_params = LoopChainParams()
    if moves is None:
        moves = build_moveset(model, fp, chain_params.basis_mode)
    tables = weight_tables(fp, model)
    betas = schedule.betas
    K = schedule.stages
    streams, seeds = _child_seeds(seed, K + 2)
    bi, th = chain_params.burn_in, chain_params.thin

    masks0, la0, _n0 = run_loop_chain(model, moves, tables, betas[0], s0, bi, th, seed=streams[0])
    keys = [row.tobytes() for row in np.packbits(masks0, axis=1, bitorder="little")] if model.m else [b""] * s0
    ints = [int.from_bytes(k, "little") for k in keys]
    top = np.max(la0)
    cand = sorted({ints[j] for j in range(s0) if la0[j] == top})
    f_star = cand[0]
    s_star = sum(1 for x in ints if x == f_star)
    U_log = math.log(s0 / s_star) + betas[0] * float(top)

    H, logH = [], []
    for i in range(K):
        b, b_next = betas[i], betas[i + 1]
        _m, la, _neg = run_loop_chain(model, moves, tables, b, s1, bi, th, seed=streams[i + 1])
        lh = _log_mean_exp((b_next - b) * la)
        logH.append(lh)
        H.append(math.exp(lh))
    if s2 > 0:
        _m, _la, negs = run_loop_chain(model, moves, tables, 1.0, s2, bi, th, seed=streams[K + 1])
        kappa = float(np.mean(negs))
    else:
        kappa = 0.0
    report = EstimateReport(
        method="mcmc-bp-whole",
        log_abs_estimate=math.nan,
        sign=1,
        stage_ratios=H,
        log_stage_ratios=logH,
        kappa=kappa,
        U_log=U_log,
        params_used={"s0": s0, "s1": s1, "s2": s2, "burn_in": bi, "thin": th,
                     "basis_mode": chain_params.basis_mode, "betas": list(betas),
                     "sign_threshold": sign_threshold, "backend": kernels.BACKEND},
        seeds=seeds,
        diagnostics={"f_star": hex(f_star), "s_star": s_star, "mode_fraction": s_star / s0,
                     "mode_starved": s_star / s0 < mode_floor, "n_moves": len(moves.moves)},
    )
    log_sign, sgn = _sign_factor(kappa, sign_threshold, report)
    report.log_abs_estimate = U_log + math.fsum(logH) + log_sign
    report.sign = sgn
    report.wall_time = time.perf_counter() - t0 if record_timing else 0.0
    return report


# --------------------------------------------------------------------------
# Gibbs baseline

def gibbs_ladder(points: int) -> np.ndarray:
    """``[0]`` followed by ``points - 1`` geometric steps from 1e-3 to 1."""
    if points < 2:
        raise ValueError("need at least two ladder points")
    if points == 2:
        return np.array([0.0, 1.0])
    b = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, points - 1)])
    b[-1] = 1.0
    return b


def ais_gibbs_baseline(model: PairwiseModel, schedule_points: int = 20, samples: int = 100,
                       sweeps_per_point: int = 1, seed=None, betas=None,
                       record_timing: bool = True, backend=None) -> EstimateReport:
    """Annealed importance sampling of ``log Z`` with single-site Gibbs sweeps.

    Particles start uniform (``Z_0 = 2**n``) and follow ``p_beta ∝ prod psi**beta``
    along the ladder; the estimate is the log mean importance weight.
    """
    t0 = time.perf_counter()
    if betas is None:
        betas = gibbs_ladder(schedule_points)
    betas = np.ascontiguousarray(betas, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_vf = np.log(model.vertex_factors)
        log_ef = np.log(model.edge_factors)
    indptr, nbr, nbr_edge = model.adjacency
    ea = model.edge_array
    ks = kernel_seed(seed)
    kb = backend if backend is not None else kernels.active
    logw = kb.gibbs_ais(indptr, nbr, nbr_edge, np.ascontiguousarray(ea[:, 0]),
                        np.ascontiguousarray(ea[:, 1]), np.ascontiguousarray(log_vf),
                        np.ascontiguousarray(log_ef.reshape(model.m, 2, 2)), betas,
                        int(samples), int(sweeps_per_point), ks)
    est = model.n * math.log(2.0) + _log_mean_exp(logw)
    return EstimateReport(
        method="gibbs",
        log_abs_estimate=est,
        sign=1,
        params_used={"samples": samples, "sweeps_per_point": sweeps_per_point,
                     "betas": betas.tolist(),
                     "backend": "python" if kb is kernels.python_backend else "compiled"},
        seeds={"master": seed_entropy(seed), "streams": [ks]},
        wall_time=time.perf_counter() - t0 if record_timing else 0.0,
        diagnostics={"log_weight_sd": float(np.std(logw)) if np.all(np.isfinite(logw)) else math.inf},
    )


def combine_bp_mcmc(fp: BPFixedPoint, loop_report: EstimateReport) -> float:
    """``log Z`` estimate: Bethe value plus the estimated log loop sum."""
    if loop_report.sign <= 0:
        raise NegativeSeries("loop-series estimate is not positive", loop_report)
    return float(fp.bethe_log_z + loop_report.log_abs_estimate)
