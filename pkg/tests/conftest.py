"""Shared fixtures and independent reference implementations.

The reference functions here deliberately avoid the package's vectorized
code paths: they loop over configurations and edge subsets in plain Python
so that agreement with the library is meaningful.
"""
import itertools
import math

import numpy as np
import pytest

from loopmc.model import PairwiseModel, grid_edges


def random_connected_edges(rng, n, m, max_degree=None, max_tries=1000):
    """Random simple connected graph with ``n`` vertices and ``m`` edges.

    A random spanning tree is grown first, then extra edges are added. With
    ``max_degree`` set, no vertex exceeds it (the call retries on failure).
    """
    for _ in range(max_tries):
        deg = [0] * n
        order = rng.permutation(n).tolist()
        edges = set()
        ok = True
        for i in range(1, n):
            cands = [u for u in order[:i] if max_degree is None or deg[u] < max_degree]
            if not cands:
                ok = False
                break
            u = cands[rng.integers(len(cands))]
            v = order[i]
            edges.add((min(u, v), max(u, v)))
            deg[u] += 1
            deg[v] += 1
        if not ok:
            continue
        pool = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
        rng.shuffle(pool)
        for u, v in pool:
            if len(edges) >= m:
                break
            if max_degree is not None and (deg[u] >= max_degree or deg[v] >= max_degree):
                continue
            edges.add((u, v))
            deg[u] += 1
            deg[v] += 1
        if len(edges) == m:
            return sorted(edges)
    raise RuntimeError(f"could not build graph n={n} m={m} max_degree={max_degree}")


def random_model(rng, edges, n, lo=0.2, hi=2.0):
    vf = rng.uniform(lo, hi, size=(n, 2))
    ef = rng.uniform(lo, hi, size=(len(edges), 2, 2))
    return PairwiseModel(vf, tuple(edges), ef)


def random_tree_edges(rng, n):
    return [(int(rng.integers(v)), v) for v in range(1, n)]


def brute_log_z(model):
    """log Z by a plain loop over configurations."""
    vf, ef = model.vertex_factors, model.edge_factors
    total = 0.0
    for x in itertools.product((0, 1), repeat=model.n):
        w = 1.0
        for v in range(model.n):
            w *= vf[v, x[v]]
        for e, (u, v) in enumerate(model.edges):
            w *= ef[e, x[u], x[v]]
        total += w
    return math.log(total)


def subset_degrees(subset, edges, n):
    deg = [0] * n
    for e in subset:
        u, v = edges[e]
        deg[u] += 1
        deg[v] += 1
    return deg


def brute_loop_sum(model, fp, two_regular=False):
    """Loop series straight from the weight formula, subset by subset."""
    tau = fp.tau_v
    total = 0.0
    for k in range(model.m + 1):
        for subset in itertools.combinations(range(model.m), k):
            deg = subset_degrees(subset, model.edges, model.n)
            if any(d == 1 for d in deg):
                continue
            if two_regular and any(d not in (0, 2) for d in deg):
                continue
            w = 1.0
            for e in subset:
                u, v = model.edges[e]
                w *= fp.tau_uv[e, 1, 1] / (tau[u] * tau[v]) - 1.0
            for v, d in enumerate(deg):
                if d >= 2:
                    t = tau[v]
                    w *= t + (-1) ** d * (t / (1 - t)) ** (d - 1) * t
            total += w
    return total


def count_eulerian(edges, n):
    """Number of edge subsets with all degrees even, by direct scan."""
    c = 0
    m = len(edges)
    for mask in range(1 << m):
        deg = [0] * n
        for e in range(m):
            if mask >> e & 1:
                u, v = edges[e]
                deg[u] += 1
                deg[v] += 1
        c += all(d % 2 == 0 for d in deg)
    return c


def cube_edges():
    """The 3-cube, a 3-regular graph with 8 vertices and 12 edges."""
    return [(u, u ^ (1 << b)) for u in range(8) for b in range(3) if u < u ^ (1 << b)]


def petersen_edges():
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return [tuple(sorted(e)) for e in outer + spokes + inner]


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture(scope="session")
def grid2():
    return grid_edges(2)


def elimination_log_z(model):
    """log Z by variable elimination with a min-degree order.

    Independent of the enumeration code, and usable past its size guard on
    models of small treewidth.
    """
    factors = [((v,), np.array(model.vertex_factors[v])) for v in range(model.n)]
    factors += [((u, v), np.array(model.edge_factors[e])) for e, (u, v) in enumerate(model.edges)]
    log_scale = 0.0
    remaining = set(range(model.n))
    while remaining:
        def width(x):
            return len({y for s, _ in factors if x in s for y in s})
        x = min(sorted(remaining), key=width)
        touch = [f for f in factors if x in f[0]]
        factors = [f for f in factors if x not in f[0]]
        scope = sorted({y for s, _ in touch for y in s})
        letters = {y: chr(97 + i) for i, y in enumerate(scope)}
        out = [y for y in scope if y != x]
        spec = ",".join("".join(letters[y] for y in s) for s, _ in touch)
        spec += "->" + "".join(letters[y] for y in out)
        table = np.einsum(spec, *[t for _, t in touch])
        mx = float(table.max())
        log_scale += math.log(mx)
        factors.append((tuple(out), table / mx))
        remaining.discard(x)
    for s, t in factors:
        assert s == ()
        log_scale += math.log(float(t))
    return log_scale
