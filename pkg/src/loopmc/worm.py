"""Worm chain over 2-regular loops and two-odd-vertex subgraphs, and the
trial-restart sampler for the 2-regular loop distribution.

States are edge subsets whose odd-degree vertex set has size 0 or 2. On a
graph of maximum degree at most 3 the even states are exactly the 2-regular
loops (plus the empty subgraph), which is the setting the chain needs; larger
degrees must go through :func:`loopmc.model.degree3_transform` first.

A state's weight is ``prod_{e in F} |w(e)|`` with the per-edge magnitudes of
:func:`loopmc.bp.edge_weight_magnitudes`. The stationary law of the chain is
``pi_WA(F) ∝ Psi(F) prod |w(e)|`` with ``Psi = n`` on even states and ``2``
on two-odd states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bp import BPFixedPoint, edge_weight_magnitudes
from .loops import EdgeSubgraph, degrees_of
from .model import PairwiseModel
from .rng import KernelRNG, kernel_seed


@dataclass(frozen=True)
class WormState:
    subgraph: EdgeSubgraph
    odd_vertices: tuple
    log_weight: float

    @classmethod
    def empty(cls, model: PairwiseModel) -> "WormState":
        return cls(EdgeSubgraph.empty(model), (), 0.0)

    @classmethod
    def from_mask(cls, model: PairwiseModel, mask: int, log_mag) -> "WormState":
        F = EdgeSubgraph.from_mask(model, mask)
        lw = math.fsum(float(log_mag[e]) for e in F.edge_ids)
        return cls(F, F.odd_vertices, lw)

    @property
    def is_even(self) -> bool:
        return not self.odd_vertices


@dataclass(frozen=True)
class WormParams:
    """Trial count ``N`` and steps per trial ``T`` of the rejection sampler."""

    N: int
    T: int
    seed: int | None = None

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError("WormParams needs N >= 1 and T >= 1")


@dataclass(frozen=True)
class WormParamChoice:
    theorem: WormParams
    practical: WormParams

    def select(self, mode: str) -> WormParams:
        if mode not in ("theorem", "practical"):
            raise ValueError(f"unknown mode {mode!r}")
        return getattr(self, mode)


PRACTICAL_T_PER_EDGE = 200


def default_worm_params(model: PairwiseModel, delta: float, w_min: float = 1.0,
                        seed: int | None = None) -> WormParamChoice:
    """Trial/step counts for a target total-variation distance ``delta``.

    The theorem pair uses ``N = ceil(1.2 n log(3/delta))`` and
    ``T = ceil((m-n+1) log 2 + 4 Δ m n^4 log(3n/delta))``. ``w_min`` does
    not enter these bounds; it is accepted for symmetry with the annealing
    parameters. The practical pair keeps ``N`` and sets ``T = 200 m``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    n, m, dmax = model.n, model.m, model.max_degree
    N = math.ceil(1.2 * n * math.log(3.0 / delta))
    T = math.ceil((m - n + 1) * math.log(2.0) + 4 * dmax * m * n ** 4 * math.log(3.0 * n / delta))
    practical_T = max(PRACTICAL_T_PER_EDGE * m, 1)
    return WormParamChoice(WormParams(N, max(T, 1), seed), WormParams(N, practical_T, seed))


def _require_degree3(model: PairwiseModel):
    if model.max_degree > 3:
        raise ValueError("worm chain needs maximum degree <= 3; apply degree3_transform first")


def worm_log_weights(fp: BPFixedPoint, model: PairwiseModel, beta: float = 1.0) -> np.ndarray:
    """Per-edge ``beta * log|w(e)|``; ``beta = 0`` gives uniform weights."""
    _corr, mag = edge_weight_magnitudes(fp, model)
    if beta == 0:
        return np.zeros(model.m)
    with np.errstate(divide="ignore"):
        return beta * np.log(mag)


def worm_step(state: WormState, model: PairwiseModel, log_mag, rng: KernelRNG) -> WormState:
    """One worm move; draws from ``rng`` in the same order as the kernels.

    Even state: ``v`` uniform over vertices. Two-odd state: ``v`` uniform
    over the two odd vertices. Then ``u`` is a uniform neighbour of ``v`` and
    ``F ⊕ {u, v}`` is accepted by Metropolis for the target above:
    ``min(1, r)`` when moving between an even and a two-odd state, and
    ``min(1, r d(v)/d(u))`` when both are two-odd, with
    ``r = |w(F ⊕ e)| / |w(F)|``.
    """
    indptr, nbr, nbr_edge = model.adjacency
    n = model.n
    odd = state.odd_vertices
    if not odd:
        v = rng.randint(n)
    elif rng.randint(2) == 0:
        v = odd[0]
    else:
        v = odd[1]
    dv = int(indptr[v + 1] - indptr[v])
    j = int(indptr[v]) + rng.randint(dv)
    u = int(nbr[j])
    e = int(nbr_edge[j])
    F = state.subgraph
    present = (F.mask >> e) & 1
    dlog = -float(log_mag[e]) if present else float(log_mag[e])
    w_add, w_del = worm_ratios(log_mag)
    acc = float(w_del[e] if present else w_add[e])
    if not odd:
        new_odd = (v, u)
    else:
        other = odd[1] if odd[0] == v else odd[0]
        if u == other:
            new_odd = ()
        else:
            acc = acc * (float(dv) / float(indptr[u + 1] - indptr[u]))
            new_odd = (other, u)
    if acc >= 1.0 or rng.uniform() < acc:
        deg = list(F.degrees)
        step = -1 if present else 1
        deg[u] += step
        deg[v] += step
        return WormState(EdgeSubgraph(F.mask ^ (1 << e), tuple(deg)), new_odd,
                         state.log_weight + dlog)
    return state


def worm_ratios(log_mag) -> tuple[np.ndarray, np.ndarray]:
    """Insertion and removal ratios ``exp(±log|w(e)|)`` used by the kernels."""
    lm = np.asarray(log_mag, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.ascontiguousarray(np.exp(lm)), np.ascontiguousarray(np.exp(-lm))


def sample_2regular_masks(model: PairwiseModel, log_mag, params: WormParams, count: int,
                          seed=None, backend=None) -> tuple[np.ndarray, int, int]:
    """``count`` independent outputs of the trial-restart sampler.

    Returns ``(masks, failures, trials)``; ``masks`` is ``(count, m)`` uint8.
    A sample whose ``N`` trials all end in a two-odd state is the empty
    subgraph and is counted in ``failures``.
    """
    _require_degree3(model)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if model.m == 0:
        return np.zeros((count, 0), dtype=np.uint8), 0, count
    kb = backend if backend is not None else kernels.active
    indptr, nbr, nbr_edge = model.adjacency
    s = kernel_seed(params.seed if seed is None else seed)
    w_add, w_del = worm_ratios(log_mag)
    masks, fails, trials = kb.worm_batch(indptr, nbr, nbr_edge, w_add, w_del, int(count),
                                         int(params.N), int(params.T), s)
    return masks, int(fails), int(trials)


def sample_2regular(model: PairwiseModel, fp: BPFixedPoint, params: WormParams,
                    rng=None, beta: float = 1.0) -> EdgeSubgraph:
    """A single draw of the trial-restart sampler (empty on total failure)."""
    masks, _f, _t = sample_2regular_masks(model, worm_log_weights(fp, model, beta), params, 1,
                                          seed=rng)
    return EdgeSubgraph.from_edges(model, np.flatnonzero(masks[0]))


def rows_to_ints(masks: np.ndarray) -> list[int]:
    """Edge-indicator rows to Python bitmask ints (bit ``e`` = column ``e``)."""
    masks = np.asarray(masks, dtype=np.uint8)
    if masks.shape[1] == 0:
        return [0] * masks.shape[0]
    packed = np.packbits(masks, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


# --------------------------------------------------------------------------
# explicit kernel (small graphs)

def worm_states(model: PairwiseModel) -> list[int]:
    """Bitmasks with zero or two odd-degree vertices, ascending."""
    _require_degree3(model)
    if model.m > 20:
        raise ValueError("explicit worm kernel limited to m <= 20")
    out = []
    for mask in range(1 << model.m):
        deg = degrees_of(mask, model.edges, model.n)
        if sum(d & 1 for d in deg) in (0, 2):
            out.append(mask)
    return out


def worm_transition_matrix(model: PairwiseModel, log_mag) -> tuple[list[int], np.ndarray]:
    """Exact one-step kernel of :func:`worm_step` over :func:`worm_states`."""
    states = worm_states(model)
    index = {s: i for i, s in enumerate(states)}
    n = model.n
    P = np.zeros((len(states), len(states)))
    for i, mask in enumerate(states):
        F = WormState.from_mask(model, mask, log_mag)
        odd = F.odd_vertices
        if odd:
            picks = [(v, 0.5) for v in odd]
        else:
            picks = [(v, 1.0 / n) for v in range(n)]
        for v, pv in picks:
            nb = model.neighbors(v)
            dv = len(nb)
            for u, e in nb:
                q = pv / dv
                present = (mask >> e) & 1
                dlog = -float(log_mag[e]) if present else float(log_mag[e])
                if odd:
                    other = odd[1] if odd[0] == v else odd[0]
                    if u != other:
                        dlog += math.log(dv / len(model.neighbors(u)))
                acc = 1.0 if dlog >= 0 else math.exp(dlog)
                j = index[mask ^ (1 << e)]
                P[i, j] += q * acc
                P[i, i] += q * (1.0 - acc)
    return states, P


def worm_stationary(model: PairwiseModel, log_mag, states: list[int]) -> np.ndarray:
    """``pi_WA`` over ``states``: ``Psi(F) prod |w(e)|`` normalized."""
    logs = np.empty(len(states))
    for i, mask in enumerate(states):
        F = WormState.from_mask(model, mask, log_mag)
        psi = model.n if F.is_even else 2
        logs[i] = math.log(psi) + F.log_weight
    p = np.exp(logs - logs.max())
    return p / p.sum()
