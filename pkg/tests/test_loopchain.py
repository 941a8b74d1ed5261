import itertools
import math

import numpy as np
import pytest

from conftest import (count_eulerian, cube_edges, petersen_edges, random_connected_edges,
                      random_model, random_tree_edges)
from loopmc.bp import run_bp
from loopmc.loopchain import (LoopChainState, build_moveset, decompose_loop, edge_costs,
                              eulerian_span, loop_chain_step, loop_transition_matrix,
                              run_loop_chain, sample_generalized_loops, support_connected,
                              xor_moves)
from loopmc.loops import EdgeSubgraph, enumerate_loops, in_loops, loop_distribution, weight_tables
from loopmc.model import PairwiseModel, gen_glassy_ising, grid_edges, ising_model
from loopmc.rng import KernelRNG


def _uniform(edges, n):
    return PairwiseModel(np.ones((n, 2)), tuple(edges), np.ones((len(edges), 2, 2)))


def _grid(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return edges


def _bits(mask):
    return [e for e in range(mask.bit_length()) if mask >> e & 1]


def _is_simple_cycle(model, mask):
    F = EdgeSubgraph.from_mask(model, mask)
    if any(d not in (0, 2) for d in F.degrees) or mask == 0:
        return False
    # connected: walk from one vertex along F
    ids = _bits(mask)
    adj = {}
    for e in ids:
        u, v = model.edges[e]
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = next(iter(adj))
    seen, stack = {start}, [start]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(adj)


def _rank(vectors):
    rows = []
    for v in vectors:
        for r in rows:
            v = min(v, v ^ r)
        if v:
            rows.append(v)
    return len(rows)


def _greedy_min_basis_cost(model, costs):
    """Matroid greedy over every simple cycle: an exact minimum basis."""
    cycles = [mk for mk in range(1, 1 << model.m) if _is_simple_cycle(model, mk)]
    cycles.sort(key=lambda mk: sum(costs[e] for e in _bits(mk)))
    chosen = []
    for mk in cycles:
        if _rank(chosen + [mk]) > len(chosen):
            chosen.append(mk)
    return sum(costs[e] for mk in chosen for e in _bits(mk)), len(chosen)


def _all_pairs_dist(model, costs):
    n = model.n
    d = np.full((n, n), math.inf)
    np.fill_diagonal(d, 0.0)
    for e, (u, v) in enumerate(model.edges):
        d[u, v] = d[v, u] = min(d[u, v], costs[e])
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def test_square_moves():
    model = _uniform(grid_edges(2), 4)
    ms = build_moveset(model, costs=np.ones(4))
    assert ms.cycles == (15,)
    for (u, v), p in zip(itertools.combinations(range(4), 2), ms.paths):
        assert bin(p).count("1") in (1, 2)
        assert EdgeSubgraph.from_mask(model, p).odd_vertices == (u, v)


def test_two_by_three_grid_basis():
    model = _uniform(_grid(2, 3), 6)
    ms = build_moveset(model, costs=np.ones(model.m))
    assert len(ms.cycles) == 2
    assert all(bin(c).count("1") == 4 for c in ms.cycles)
    assert sum(bin(c).count("1") for c in ms.cycles) == 8
    assert _greedy_min_basis_cost(model, np.ones(model.m)) == (8, 2)


SUITE = [
    ("K4", [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], 4),
    ("grid2x3", _grid(2, 3), 6),
    ("cube", cube_edges(), 8),
    ("petersen", petersen_edges(), 10),
    ("grid3", grid_edges(3), 9),
    ("K5", list(itertools.combinations(range(5), 2)), 5),
]


@pytest.mark.parametrize("name,edges,n", SUITE, ids=[s[0] for s in SUITE])
@pytest.mark.parametrize("mode", ["min_weight", "fundamental"])
def test_moveset_invariants(name, edges, n, mode, rng):
    model = _uniform(edges, n)
    costs = rng.uniform(0.0, 3.0, size=model.m)
    ms = build_moveset(model, basis_mode=mode, costs=costs)
    assert len(ms.cycles) == model.m - n + 1
    assert all(_is_simple_cycle(model, c) for c in ms.cycles)
    assert len(ms.paths) == n * (n - 1) // 2
    dist = _all_pairs_dist(model, costs)
    for (u, v), p in zip(itertools.combinations(range(n), 2), ms.paths):
        assert EdgeSubgraph.from_mask(model, p).odd_vertices == (u, v)
        assert sum(costs[e] for e in _bits(p)) == pytest.approx(dist[u, v], abs=1e-12)
        assert ms.path(u, v) == ms.path(v, u) == p
    if model.m <= 16:
        evens = {mk for mk in range(1 << model.m)
                 if all(d % 2 == 0 for d in EdgeSubgraph.from_mask(model, mk).degrees)}
        assert eulerian_span(ms) == evens
        assert len(evens) == count_eulerian(edges, n)


@pytest.mark.parametrize("name,edges,n", SUITE[:4], ids=[s[0] for s in SUITE[:4]])
def test_min_weight_basis_is_minimal(name, edges, n, rng):
    model = _uniform(edges, n)
    costs = rng.uniform(0.1, 2.0, size=model.m)
    ms = build_moveset(model, costs=costs)
    got = sum(costs[e] for c in ms.cycles for e in _bits(c))
    ref, size = _greedy_min_basis_cost(model, costs)
    assert size == len(ms.cycles)
    assert got == pytest.approx(ref, abs=1e-12)
    fund = build_moveset(model, basis_mode="fundamental", costs=costs)
    assert got <= sum(costs[e] for c in fund.cycles for e in _bits(c)) + 1e-12


def test_costs_from_fixed_point():
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=1)
    fp = run_bp(model)
    c = edge_costs(fp, model)
    assert np.all(c >= 0)
    ms = build_moveset(model, fp)
    assert np.array_equal(ms.costs, c)
    with pytest.raises(ValueError):
        build_moveset(model, costs=-np.ones(model.m))
    with pytest.raises(ValueError):
        build_moveset(model, fp, basis_mode="horton")


def test_decompose_trivial_cases():
    model = _uniform(grid_edges(3), 9)
    ms = build_moveset(model, costs=np.ones(model.m))
    assert decompose_loop(EdgeSubgraph.empty(model), ms) == []
    for i, c in enumerate(ms.cycles):
        assert decompose_loop(EdgeSubgraph.from_mask(model, c), ms) == [i]


@pytest.mark.parametrize("mode", ["min_weight", "fundamental"])
def test_decompose_round_trip_grid3(mode):
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=2)
    ms = build_moveset(model, run_bp(model), mode)
    loops = enumerate_loops(model, "loops")
    assert len(loops) == 43
    for F in loops:
        idx = decompose_loop(F, ms)
        assert xor_moves(ms, idx) == F.mask


def test_rejected_move_keeps_state():
    model = gen_glassy_ising(2, 0.3, 0.5, 0.5, seed=0)
    fp = run_bp(model)
    tables = weight_tables(fp, model)
    # only paths are available, and a single path is never a loop
    ms = build_moveset(model, fp)
    ms_paths = type(ms)(ms.n, (), ms.paths, ms.costs, ms.basis_mode, ms._gf2)
    s = LoopChainState.empty(model)
    r = KernelRNG(1)
    for _ in range(50):
        assert loop_chain_step(s, ms_paths, model, tables, r) is s


def _small_models():
    rng = np.random.default_rng(8)
    out = [gen_glassy_ising(2, 0.3, 0.5, 0.5, seed=0), gen_glassy_ising(3, 0.2, 0.5, 0.4, seed=1)]
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    out.append(random_model(rng, edges, 4))
    out.append(random_model(rng, random_connected_edges(rng, 7, 10), 7))
    out.append(random_model(rng, _grid(2, 4), 8))
    return out


@pytest.mark.parametrize("model", _small_models())
@pytest.mark.parametrize("beta", [1.0, 2.5])
def test_loop_kernel_stationary(model, beta):
    fp = run_bp(model)
    tables = weight_tables(fp, model)
    ms = build_moveset(model, fp)
    states, la, P = loop_transition_matrix(model, ms, tables, beta)
    assert len(states) <= 200
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-14)
    pi = np.exp(beta * (la - la.max()))
    pi /= pi.sum()
    assert np.max(np.abs(pi @ P - pi)) <= 1e-10
    assert support_connected(P)


def test_step_matches_kernel_row():
    model = gen_glassy_ising(3, 0.2, 0.5, 0.4, seed=1)
    fp = run_bp(model)
    tables = weight_tables(fp, model)
    ms = build_moveset(model, fp)
    states, la, P = loop_transition_matrix(model, ms, tables)
    index = {s: i for i, s in enumerate(states)}
    k = 20000
    for i in (0, 7):
        F = EdgeSubgraph.from_mask(model, states[i])
        w = la[i]
        s0 = LoopChainState(F, float(w), False)
        r = KernelRNG(21 + i)
        counts = np.zeros(len(states))
        for _ in range(k):
            s = loop_chain_step(s0, ms, model, tables, r)
            assert in_loops(s.subgraph)
            counts[index[s.subgraph.mask]] += 1
        p = P[i]
        assert np.all(np.abs(counts / k - p) <= 5 * np.sqrt(p * (1 - p) / k) + 1e-12)


def test_tree_draws_empty(rng):
    edges = random_tree_edges(rng, 6)
    model = ising_model(edges, rng.normal(0, 1, 5), rng.normal(0, 1, 6))
    draws = sample_generalized_loops(model, run_bp(model), 30, 10, 2, seed=0)
    assert all(F.mask == 0 for F in draws)


def test_square_frequencies():
    model = ising_model(grid_edges(2), [0.9, 0.7, 0.8, 0.6], [0.2, -0.3, 0.1, 0.0])
    fp = run_bp(model)
    masks, p, _sg = loop_distribution(model, fp)
    assert masks.tolist() == [0, 15]
    draws = sample_generalized_loops(model, fp, 40000, 100, 5, seed=3)
    f = np.mean([F.mask == 15 for F in draws])
    # thinned draws are nearly independent on two states
    assert abs(f - p[1]) <= 5 * math.sqrt(p[1] * (1 - p[1]) / len(draws))


def test_cold_chain_finds_mode():
    model = gen_glassy_ising(3, 0.8, 0.3, 0.2, seed=5)
    fp = run_bp(model)
    masks, p, _sg = loop_distribution(model, fp, beta=8.0)
    top = int(masks[np.argmax(p)])
    assert np.sort(p)[-1] > np.sort(p)[-2]
    ms = build_moveset(model, fp)
    got, _la, _neg = run_loop_chain(model, ms, weight_tables(fp, model), 8.0, 500, 2000, 5, seed=9)
    ints = [int("".join(map(str, row[::-1])), 2) for row in got]
    vals, counts = np.unique(ints, return_counts=True)
    assert int(vals[np.argmax(counts)]) == top


def test_run_chain_validation():
    model = gen_glassy_ising(2, 0.3, 0.5, 0.5, seed=0)
    fp = run_bp(model)
    ms = build_moveset(model, fp)
    tables = weight_tables(fp, model)
    with pytest.raises(ValueError):
        run_loop_chain(model, ms, tables, 0.0, 5, 5, 1)
    with pytest.raises(ValueError):
        run_loop_chain(model, ms, tables, 1.0, 5, 5, 0)
