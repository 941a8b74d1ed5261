import os
import subprocess
import sys

import numpy as np
import pytest

from loopmc import _pykernels, kernels
from loopmc.annealing import ais_gibbs_baseline
from loopmc.bp import run_bp
from loopmc.loopchain import build_moveset, run_loop_chain
from loopmc.loops import weight_tables
from loopmc.model import degree3_transform, gen_glassy_ising, gen_hardcore
from loopmc.rng import KernelRNG, kernel_seed, seed_entropy, spawn, splitmix64
from loopmc.worm import WormParams, sample_2regular_masks, worm_log_weights

compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")


def test_splitmix_reference():
    st, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF
    assert splitmix64(st)[1] == 0x6E789E6AA1B965F4


def test_xoshiro_reference():
    r = KernelRNG.__new__(KernelRNG)
    r.s0, r.s1, r.s2, r.s3 = 1, 2, 3, 4
    assert [r.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]


def test_uniform_open_interval():
    r = KernelRNG(5)
    u = np.array([r.uniform() for _ in range(20000)])
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
    r2 = KernelRNG(5)
    r2.s0 = r2.s1 = r2.s2 = r2.s3 = 0
    # an all-zero state emits zeros; the open-interval shift still keeps u > 0
    assert r2.uniform() == 0.5 / 2 ** 53


def test_randint_range_and_balance():
    r = KernelRNG(11)
    for k in (1, 2, 3, 7, 1000):
        draws = [r.randint(k) for _ in range(3000)]
        assert min(draws) >= 0 and max(draws) < k
    counts = np.bincount([r.randint(3) for _ in range(30000)], minlength=3)
    assert np.all(np.abs(counts - 10000) < 5 * np.sqrt(30000 * (1 / 3) * (2 / 3)))


def test_seed_plumbing():
    assert kernel_seed(7) == kernel_seed(np.random.SeedSequence(7))
    assert kernel_seed(7) != kernel_seed(8)
    a, b = spawn(3, 2)
    assert kernel_seed(a) != kernel_seed(b)
    assert seed_entropy(42) == 42


@compiled
@pytest.mark.parametrize("seed", [0, 1, 2 ** 63 + 5, 2 ** 64 - 1])
@pytest.mark.parametrize("k", [0, 1, 5, 12345])
def test_rng_streams_identical(seed, k):
    assert np.array_equal(kernels.compiled_backend.rng_stream(seed, 500, k),
                          _pykernels.rng_stream(seed, 500, k))


@compiled
def test_worm_backends_identical():
    grid = gen_glassy_ising(2, 0.5, 0.5, 0.3, seed=0)
    tm, _ = degree3_transform(grid, "path")
    lm = worm_log_weights(run_bp(tm), tm)
    args = (tm, lm, WormParams(8, 150), 40)
    a = sample_2regular_masks(*args, seed=4, backend=kernels.compiled_backend)
    b = sample_2regular_masks(*args, seed=4, backend=kernels.python_backend)
    assert np.array_equal(a[0], b[0])
    assert a[1:] == b[1:]
    assert a[0].any()


@compiled
@pytest.mark.parametrize("beta", [1.0, 3.0])
def test_loop_chain_backends_identical(beta):
    model = gen_glassy_ising(3, 0.3, 0.5, 0.5, seed=2)
    fp = run_bp(model)
    ms = build_moveset(model, fp)
    tables = weight_tables(fp, model)
    a = run_loop_chain(model, ms, tables, beta, 100, 50, 3, seed=6, backend=kernels.compiled_backend)
    b = run_loop_chain(model, ms, tables, beta, 100, 50, 3, seed=6, backend=kernels.python_backend)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])
    assert np.array_equal(a[2], b[2])


@compiled
@pytest.mark.parametrize("model", [gen_glassy_ising(2, 0.4, 0.5, 0.5, seed=1), gen_hardcore(2, 1.5)],
                         ids=["ising", "hardcore"])
def test_gibbs_backends_identical(model):
    kw = dict(schedule_points=6, samples=15, sweeps_per_point=3, seed=8, record_timing=False)
    a = ais_gibbs_baseline(model, backend=kernels.compiled_backend, **kw)
    b = ais_gibbs_baseline(model, backend=kernels.python_backend, **kw)
    assert a.log_abs_estimate == b.log_abs_estimate
    assert a.params_used["backend"] == "compiled" and b.params_used["backend"] == "python"


def test_env_forces_python_backend():
    env = dict(os.environ, LOOPMC_BACKEND="python")
    code = "from loopmc import kernels; print(kernels.BACKEND, kernels.active.__name__)"
    r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.split() == ["python", "loopmc._pykernels"]


def test_active_backend_exports():
    for name in ("worm_batch", "loop_chain", "gibbs_ais", "rng_stream"):
        assert callable(getattr(kernels.active, name))
    assert kernels.BACKEND in ("compiled", "python")
