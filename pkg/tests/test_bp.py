import math

import numpy as np
import pytest

from conftest import random_connected_edges, random_model, random_tree_edges
from loopmc.bp import (check_nondegenerate, edge_weight_magnitudes, fixed_point_from_dict,
                       fixed_point_to_dict, read_fixed_point, run_bp, write_fixed_point)
from loopmc.errors import DegenerateMarginal
from loopmc.model import (PairwiseModel, degree3_transform, exact_marginals, exact_partition,
                          gen_glassy_ising, gen_hardcore, grid_edges, ising_model)


def _check_consistent(fp, model):
    assert np.all((fp.tau_v >= 0) & (fp.tau_v <= 1))
    assert np.all((fp.tau_uv >= 0) & (fp.tau_uv <= 1))
    assert np.allclose(fp.tau_uv.sum(axis=(1, 2)), 1.0, atol=1e-10)
    for e, (u, v) in enumerate(model.edges):
        assert fp.tau_uv[e, 1, :].sum() == pytest.approx(fp.tau_v[u], abs=1e-8)
        assert fp.tau_uv[e, :, 1].sum() == pytest.approx(fp.tau_v[v], abs=1e-8)


def test_tree_exactness(rng):
    for _ in range(50):
        n = int(rng.integers(2, 13))
        model = random_model(rng, random_tree_edges(rng, n), n, lo=0.1, hi=2.0)
        fp = run_bp(model)
        assert fp.converged
        exact = exact_partition(model)
        assert abs(fp.bethe_log_z - exact) <= 1e-8 * abs(exact)
        _check_consistent(fp, model)


def test_single_edge_joint_is_exact(rng):
    model = random_model(rng, [(0, 1)], 2)
    fp = run_bp(model)
    _tv, tuv = exact_marginals(model)
    assert np.allclose(fp.tau_uv[0], tuv[0], atol=1e-12)


def test_symmetric_square():
    J = 0.4
    model = ising_model(grid_edges(2), [J] * 4, [0.0] * 4)
    fp = run_bp(model)
    assert np.allclose(fp.tau_v, 0.5, atol=1e-12)
    # fixed point of the 4-cycle: the cavity field is zero so the edge
    # belief is the bare pair factor exp(J s s') normalized
    p11 = math.exp(J) / (2 * math.exp(J) + 2 * math.exp(-J))
    assert np.allclose(fp.tau_uv[:, 1, 1], p11, atol=1e-10)


def test_loopy_consistency_and_residual(rng):
    for _ in range(10):
        edges = random_connected_edges(rng, 7, 10)
        model = random_model(rng, edges, 7)
        fp = run_bp(model)
        assert fp.converged
        assert fp.residual <= fp.tol
        _check_consistent(fp, model)


def test_nonconvergence_is_flagged():
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=0)
    fp = run_bp(model, max_iters=2, tol=1e-14)
    assert not fp.converged
    assert fp.iterations == 2
    assert fp.residual > 1e-14


def test_damping_invariance():
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=4)
    fp = run_bp(model, damping=0.5)
    again = run_bp(model, damping=0.2, init_messages=fp.messages)
    assert again.converged
    assert np.max(np.abs(again.messages - fp.messages)) <= fp.tol


def test_hardcore_zero_factors():
    model = gen_hardcore(3, 2.0)
    fp = run_bp(model)
    assert fp.converged
    _check_consistent(fp, model)
    assert np.allclose(fp.tau_uv[:, 1, 1], 0.0)


def test_edge_weights_independent_edge():
    model = PairwiseModel([[1.0, 2.0], [3.0, 1.0]], ((0, 1),), np.ones((1, 2, 2)))
    corr, mag = edge_weight_magnitudes(run_bp(model), model)
    assert corr[0] == pytest.approx(0.0, abs=1e-14)
    assert mag[0] == pytest.approx(0.0, abs=1e-14)


def test_equality_edges_have_unit_magnitude():
    g = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=1)
    tm, _ = degree3_transform(g, "path")
    fp = run_bp(tm)
    corr, mag = edge_weight_magnitudes(fp, tm)
    assert np.allclose(mag[g.m:], 1.0, atol=1e-9)
    assert np.all(mag <= 1.0)


def test_ferromagnetic_edge_positive():
    model = ising_model(grid_edges(2), [0.5] * 4, [0.0] * 4)
    corr, mag = edge_weight_magnitudes(run_bp(model), model)
    assert np.all(corr > 0)
    _tv, tuv = exact_marginals(model)
    # BP reproduces the sign of the exact connected correlation
    assert np.all(tuv[:, 1, 1] - 0.25 > 0)


def test_path_transform_reproduces_bp():
    g = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=2)
    tm, vm = degree3_transform(g, "path")
    a, b = run_bp(g), run_bp(tm)
    assert b.bethe_log_z == pytest.approx(a.bethe_log_z, rel=1e-9)
    for v in range(g.n):
        assert np.allclose(b.tau_v[list(vm[v])], a.tau_v[v], atol=1e-9)


def test_degenerate_marginal_detected():
    model = gen_hardcore(2, 1e-15)
    fp = run_bp(model)
    with pytest.raises(DegenerateMarginal):
        check_nondegenerate(fp)
    with pytest.raises(DegenerateMarginal):
        edge_weight_magnitudes(fp, model)


def test_fixed_point_round_trip(tmp_path):
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=5)
    fp = run_bp(model)
    back = fixed_point_from_dict(fixed_point_to_dict(fp))
    assert np.array_equal(back.tau_uv, fp.tau_uv)
    assert back.bethe_log_z == fp.bethe_log_z
    p = tmp_path / "fp.json"
    write_fixed_point(p, fp)
    again = read_fixed_point(p)
    assert np.array_equal(again.messages, fp.messages)
    assert again.converged == fp.converged
