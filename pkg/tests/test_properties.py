"""Property-based checks over generated graphs, models and rows."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import elimination_log_z
from loopmc.experiment import ResultRow, dumps_csv, loads_csv
from loopmc.loopchain import build_moveset, decompose_loop, xor_moves
from loopmc.loops import enumerate_loops
from loopmc.model import PairwiseModel, degree3_transform, exact_partition
from loopmc.rng import KernelRNG

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def connected_graphs(draw, max_n=7, max_extra=6):
    n = draw(st.integers(2, max_n))
    # random tree: vertex i attaches to an earlier vertex
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
    extra = draw(st.lists(st.sampled_from(pairs), max_size=max_extra, unique=True)) if pairs else []
    return n, sorted(edges | set(extra))


@st.composite
def models(draw, max_n=7):
    n, edges = draw(connected_graphs(max_n))
    pos = st.floats(0.1, 3.0)
    vf = np.array(draw(st.lists(pos, min_size=2 * n, max_size=2 * n))).reshape(n, 2)
    ef = np.array(draw(st.lists(pos, min_size=4 * len(edges), max_size=4 * len(edges))))
    return PairwiseModel(vf, tuple(edges), ef.reshape(len(edges), 2, 2))


@SETTINGS
@given(connected_graphs(), st.sampled_from(["min_weight", "fundamental"]), st.integers(0, 2 ** 32 - 1))
def test_decomposition_round_trip(graph, mode, seed):
    n, edges = graph
    model = PairwiseModel(np.ones((n, 2)), tuple(edges), np.ones((len(edges), 2, 2)))
    costs = np.random.default_rng(seed).uniform(0.0, 2.0, len(edges))
    ms = build_moveset(model, basis_mode=mode, costs=costs)
    assert len(ms.cycles) == len(edges) - n + 1
    for F in enumerate_loops(model, "loops"):
        assert xor_moves(ms, decompose_loop(F, ms)) == F.mask


@SETTINGS
@given(models(), st.sampled_from(["cycle", "path"]))
def test_transform_preserves_log_z(model, layout):
    tm, vm = degree3_transform(model, layout)
    assert tm.max_degree <= 3
    assert sorted(v for group in vm for v in group) == list(range(tm.n))
    exact = exact_partition(model)
    assert math.isclose(elimination_log_z(tm), exact, rel_tol=1e-12, abs_tol=1e-12)


finite_or_not = st.floats(allow_nan=True, allow_infinity=True)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.integers(0, 2 ** 32 - 1), finite_or_not,
                          finite_or_not, st.sampled_from(["ok", "sign_collapse", "timeout"])),
                max_size=8))
def test_csv_round_trip(recs):
    rows = [ResultRow("hardcore", s, seed, "gibbs", 1.5, a, b, 0.0, status)
            for s, seed, a, b, status in recs]
    back = loads_csv(dumps_csv(rows))
    assert len(back) == len(rows)
    for r, q in zip(rows, back):
        for name in ("strength", "log_z_approx", "rel_error"):
            x, y = getattr(r, name), getattr(q, name)
            assert (math.isnan(x) and math.isnan(y)) or x == y
        assert (q.model_seed, q.status) == (r.model_seed, r.status)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 2 ** 31))
def test_randint_in_range(seed, k):
    r = KernelRNG(seed)
    for _ in range(20):
        assert 0 <= r.randint(k) < k
        assert 0.0 < r.uniform() < 1.0
