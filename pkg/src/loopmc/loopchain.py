"""Cycle basis, path set and the Metropolis chain over generalized loops.

A move is an edge set ``B`` drawn uniformly from ``cycles ∪ paths``; the
chain proposes ``F ⊕ B`` and rejects it outright when the result is not a
generalized loop. Every generalized loop is an XOR of moves: pair its odd
vertices, cancel them with paths, then write the remaining even subgraph in
the cycle basis (:func:`decompose_loop`).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels
from .bp import BPFixedPoint, edge_weight_magnitudes
from .loops import (EdgeSubgraph, WeightTables, edges_of, in_loops, loop_masks,
                    masks_weights, weight_from_degrees, weight_tables)
from .model import PairwiseModel
from .rng import KernelRNG, kernel_seed

MIN_MAGNITUDE = 1e-300


def edge_costs(fp: BPFixedPoint, model: PairwiseModel) -> np.ndarray:
    """``-log |w(e)|`` (nonnegative); zero magnitudes are floored."""
    _corr, mag = edge_weight_magnitudes(fp, model)
    return -np.log(np.maximum(mag, MIN_MAGNITUDE))


def shortest_path_tree(model: PairwiseModel, costs, root: int) -> tuple[list, list]:
    """Dijkstra from ``root``; returns ``(parent_vertex, parent_edge)``.

    Among equal-cost routes the one with fewer edges wins, then the one
    whose last edge has the smaller index.
    """
    n = model.n
    dist = [math.inf] * n
    hops = [0] * n
    par_v = [-1] * n
    par_e = [-1] * n
    done = [False] * n
    dist[root] = 0.0
    heap = [(0.0, 0, root)]
    while heap:
        d, h, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        for y, e in model.neighbors(x):
            if done[y]:
                continue
            nd = d + float(costs[e])
            key = (nd, h + 1)
            cur = (dist[y], hops[y])
            if key < cur or (key == cur and e < par_e[y]):
                dist[y], hops[y] = nd, h + 1
                par_v[y], par_e[y] = x, e
                heapq.heappush(heap, (nd, h + 1, y))
    return par_v, par_e


def _tree_path(par_v, par_e, target: int) -> list[int]:
    out = []
    x = target
    while par_v[x] != -1:
        out.append(par_e[x])
        x = par_v[x]
    return out


class GF2Basis:
    """Incremental GF(2) row reduction of int bitmasks with provenance."""

    def __init__(self):
        self.rows: dict[int, tuple[int, int]] = {}  # pivot bit -> (vector, combination)
        self.size = 0

    def reduce(self, vec: int) -> tuple[int, int]:
        combo = 0
        while vec:
            p = vec.bit_length() - 1
            row = self.rows.get(p)
            if row is None:
                break
            vec ^= row[0]
            combo ^= row[1]
        return vec, combo

    def add(self, vec: int) -> bool:
        """Insert ``vec`` as generator ``self.size``; False if dependent."""
        rem, combo = self.reduce(vec)
        if rem == 0:
            return False
        self.rows[rem.bit_length() - 1] = (rem, combo ^ (1 << self.size))
        self.size += 1
        return True

    def express(self, vec: int) -> list[int] | None:
        """Generator indices whose XOR is ``vec``, or None if outside the span."""
        rem, combo = self.reduce(vec)
        if rem:
            return None
        return edges_of(combo)


def horton_candidates(model: PairwiseModel, costs) -> list[tuple[float, int, tuple, int]]:
    """Candidate cycles ``P(x,u) + (u,v) + P(v,x)`` over all roots ``x`` and
    edges ``(u, v)``, keeping only simple cycles. Sorted by
    ``(cost, length, edges)`` with duplicates removed."""
    seen = set()
    out = []
    for x in range(model.n):
        par_v, par_e = shortest_path_tree(model, costs, x)
        for e, (u, v) in enumerate(model.edges):
            if par_e[u] == e or par_e[v] == e:
                continue
            pu = _tree_path(par_v, par_e, u)
            pv = _tree_path(par_v, par_e, v)
            # simple only if the two tree paths meet at x alone
            verts_u = _path_vertices(par_v, u)
            verts_v = _path_vertices(par_v, v)
            if set(verts_u) & set(verts_v) != {x}:
                continue
            edges_c = tuple(sorted(pu + pv + [e]))
            mask = 0
            for f in edges_c:
                mask |= 1 << f
            if mask in seen:
                continue
            seen.add(mask)
            cost = math.fsum(float(costs[f]) for f in edges_c)
            out.append((cost, len(edges_c), edges_c, mask))
    out.sort(key=lambda t: (t[0], t[1], t[2]))
    return out


def _path_vertices(par_v, target: int) -> list[int]:
    out = [target]
    x = target
    while par_v[x] != -1:
        x = par_v[x]
        out.append(x)
    return out


def min_weight_cycle_basis(model: PairwiseModel, costs) -> list[int]:
    """Minimum-cost cycle basis (greedy over Horton candidates)."""
    need = model.cyclomatic_number
    basis = GF2Basis()
    chosen = []
    if need == 0:
        return chosen
    for _c, _l, _edges, mask in horton_candidates(model, costs):
        if basis.add(mask):
            chosen.append(mask)
            if len(chosen) == need:
                break
    if len(chosen) != need:
        raise RuntimeError("cycle basis construction incomplete")
    return chosen


def fundamental_cycle_basis(model: PairwiseModel, costs) -> list[int]:
    """Fundamental cycles of a minimum-cost spanning tree (Kruskal; ties
    by edge index), one per non-tree edge in edge order."""
    order = sorted(range(model.m), key=lambda e: (float(costs[e]), e))
    parent = list(range(model.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = set()
    for e in order:
        u, v = model.edges[e]
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            tree.add(e)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(model.n)]
    for e in sorted(tree):
        u, v = model.edges[e]
        adj[u].append((v, e))
        adj[v].append((u, e))
    # root the tree at 0
    par_v = [-1] * model.n
    par_e = [-1] * model.n
    depth = [0] * model.n
    stack = [0]
    visited = {0}
    while stack:
        x = stack.pop()
        for y, e in adj[x]:
            if y not in visited:
                visited.add(y)
                par_v[y], par_e[y], depth[y] = x, e, depth[x] + 1
                stack.append(y)
    cycles = []
    for e in range(model.m):
        if e in tree:
            continue
        u, v = model.edges[e]
        mask = 1 << e
        a, b = u, v
        while a != b:
            if depth[a] >= depth[b]:
                mask ^= 1 << par_e[a]
                a = par_v[a]
            else:
                mask ^= 1 << par_e[b]
                b = par_v[b]
        cycles.append(mask)
    return cycles


@dataclass(frozen=True, eq=False)
class MoveSet:
    """Cycle basis plus one path per vertex pair.

    ``cycles`` and ``paths`` hold edge bitmasks. ``paths[pair_index(u, v)]``
    is the path between ``u < v``; move index ``i`` refers to ``cycles[i]``
    for ``i < len(cycles)`` and to ``paths[i - len(cycles)]`` otherwise.
    """

    n: int
    cycles: tuple
    paths: tuple
    costs: np.ndarray
    basis_mode: str
    _gf2: GF2Basis = field(repr=False, compare=False, default=None)

    @property
    def moves(self) -> tuple:
        return self.cycles + self.paths

    def pair_index(self, u: int, v: int) -> int:
        if u > v:
            u, v = v, u
        n = self.n
        return u * (2 * n - u - 1) // 2 + (v - u - 1)

    def path(self, u: int, v: int) -> int:
        return self.paths[self.pair_index(u, v)]

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Moves as ``(indptr, edge_ids)`` arrays for the kernels."""
        indptr = [0]
        flat: list[int] = []
        for mk in self.moves:
            flat.extend(edges_of(mk))
            indptr.append(len(flat))
        return np.array(indptr, dtype=np.intc), np.array(flat, dtype=np.intc)


def build_moveset(model: PairwiseModel, fp: BPFixedPoint | None = None,
                  basis_mode: str = "min_weight", costs=None) -> MoveSet:
    """Cycle basis and shortest paths under ``c(e) = -log |w(e)|``.

    ``costs`` overrides the BP-derived costs (used with uniform costs in
    tests). ``basis_mode`` is ``"min_weight"`` or ``"fundamental"``.
    """
    if costs is None:
        if fp is None:
            raise ValueError("need a fixed point or explicit costs")
        costs = edge_costs(fp, model)
    costs = np.asarray(costs, dtype=np.float64)
    if np.any(costs < 0):
        raise ValueError("edge costs must be nonnegative")
    if basis_mode == "min_weight":
        cycles = min_weight_cycle_basis(model, costs)
    elif basis_mode == "fundamental":
        cycles = fundamental_cycle_basis(model, costs)
    else:
        raise ValueError(f"unknown basis_mode {basis_mode!r}")
    paths = []
    trees = [shortest_path_tree(model, costs, u) for u in range(model.n)]
    for u, v in combinations(range(model.n), 2):
        par_v, par_e = trees[u]
        paths.append(sum(1 << e for e in _tree_path(par_v, par_e, v)))
    gf2 = GF2Basis()
    for c in cycles:
        gf2.add(c)
    costs = costs.copy()
    costs.flags.writeable = False
    return MoveSet(model.n, tuple(cycles), tuple(paths), costs, basis_mode, gf2)


def decompose_loop(F: EdgeSubgraph, moves: MoveSet) -> list[int]:
    """Move indices whose symmetric difference is ``F``.

    Odd vertices are paired in ascending order and joined by their paths;
    the even remainder is expanded in the cycle basis.
    """
    odd = F.odd_vertices
    if len(odd) % 2:
        raise ValueError("odd number of odd-degree vertices")
    rest = F.mask
    picked = []
    nc = len(moves.cycles)
    for a, b in zip(odd[0::2], odd[1::2]):
        idx = moves.pair_index(a, b)
        rest ^= moves.paths[idx]
        picked.append(nc + idx)
    combo = moves._gf2.express(rest)
    if combo is None:
        raise ValueError("remainder outside the cycle space")
    # a path may coincide with a cycle combination; XOR semantics are kept
    return sorted(combo) + picked


def xor_moves(moves: MoveSet, indices) -> int:
    out = 0
    allm = moves.moves
    for i in indices:
        out ^= allm[i]
    return out


# --------------------------------------------------------------------------
# chain

@dataclass(frozen=True)
class LoopChainState:
    subgraph: EdgeSubgraph
    log_abs_weight: float
    negative: bool = False

    @classmethod
    def empty(cls, model: PairwiseModel) -> "LoopChainState":
        return cls(EdgeSubgraph.empty(model), 0.0, False)


@dataclass(frozen=True)
class LoopChainParams:
    burn_in: int = 1000
    thin: int = 50
    basis_mode: str = "min_weight"


def loop_chain_step(state: LoopChainState, moves: MoveSet, model: PairwiseModel,
                    tables: WeightTables, rng: KernelRNG, beta: float = 1.0) -> LoopChainState:
    """One Metropolis move targeting ``|w(F)|**beta``; draws match the kernels."""
    allm = moves.moves
    b = rng.randint(len(allm))
    F = state.subgraph
    new_mask = F.mask ^ allm[b]
    deg = list(F.degrees)
    for e in edges_of(allm[b]):
        step = -1 if (F.mask >> e) & 1 else 1
        u, v = model.edges[e]
        deg[u] += step
        deg[v] += step
    r = rng.uniform()
    G = EdgeSubgraph(new_mask, tuple(deg))
    if not in_loops(G):
        return state
    w = weight_from_degrees(tables, new_mask, G.degrees)
    logacc = beta * (w.log_abs - state.log_abs_weight)
    if logacc >= 0.0 or math.log(r) < logacc:
        return LoopChainState(G, w.log_abs, w.sign < 0)
    return state


def run_loop_chain(model: PairwiseModel, moves: MoveSet, tables: WeightTables, beta: float,
                   count: int, burn_in: int, thin: int, seed=None, backend=None):
    """Record ``count`` states of the loop chain started at the empty set.

    Returns ``(masks, log_abs, negative)`` arrays; ``log_abs`` is the
    unscaled ``log |w(F)|`` of each recorded state.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if count < 0 or burn_in < 0 or thin < 1:
        raise ValueError("need count >= 0, burn_in >= 0, thin >= 1")
    m = model.m
    if not moves.moves or m == 0:
        return (np.zeros((count, m), dtype=np.uint8), np.zeros(count), np.zeros(count, dtype=np.uint8))
    kb = backend if backend is not None else kernels.active
    indptr, flat = moves.csr()
    ea = model.edge_array
    return kb.loop_chain(indptr, flat, np.ascontiguousarray(ea[:, 0]), np.ascontiguousarray(ea[:, 1]),
                         np.ascontiguousarray(tables.edge_log),
                         np.ascontiguousarray(tables.edge_neg, dtype=np.uint8),
                         np.ascontiguousarray(tables.vert_log),
                         np.ascontiguousarray(tables.vert_neg, dtype=np.uint8),
                         int(model.n), float(beta), int(burn_in), int(thin), int(count),
                         kernel_seed(seed))


def sample_generalized_loops(model: PairwiseModel, fp: BPFixedPoint, count: int, burn_in: int,
                             thin: int, beta: float = 1.0, seed=None, moves: MoveSet | None = None,
                             basis_mode: str = "min_weight") -> list[EdgeSubgraph]:
    """Thinned draws from the chain targeting ``|w(F)|**beta`` over loops."""
    if moves is None:
        moves = build_moveset(model, fp, basis_mode)
    tables = weight_tables(fp, model)
    masks, _la, _neg = run_loop_chain(model, moves, tables, beta, count, burn_in, thin, seed)
    return [EdgeSubgraph.from_edges(model, np.flatnonzero(row)) for row in masks]


# --------------------------------------------------------------------------
# explicit kernel (small graphs)

def loop_transition_matrix(model: PairwiseModel, moves: MoveSet, tables: WeightTables,
                           beta: float = 1.0):
    """Exact kernel of :func:`loop_chain_step` over all generalized loops.

    Returns ``(states, log_abs_weights, P)``.
    """
    states = [int(s) for s in loop_masks(model, "loops")]
    index = {s: i for i, s in enumerate(states)}
    la, _sg = masks_weights(model, tables, np.array(states, dtype=np.int64))
    allm = moves.moves
    k = len(allm)
    P = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for mv in allm:
            t = s ^ mv
            j = index.get(t)
            if j is None:
                P[i, i] += 1.0 / k
                continue
            d = beta * (la[j] - la[i])
            acc = 1.0 if d >= 0 else math.exp(d)
            P[i, j] += acc / k
            P[i, i] += (1.0 - acc) / k
    return states, la, P


def support_connected(P: np.ndarray, start: int = 0) -> bool:
    """True when every state is reachable from ``start`` in the support graph."""
    k = P.shape[0]
    seen = np.zeros(k, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(P[i] > 0):
                if not seen[j]:
                    seen[j] = True
                    nxt.append(int(j))
        frontier = nxt
    return bool(seen.all())


def eulerian_span(moves: MoveSet) -> set[int]:
    """XOR-closure of the cycle basis (small bases only)."""
    span = {0}
    for c in moves.cycles:
        span |= {x ^ c for x in span}
    return span
