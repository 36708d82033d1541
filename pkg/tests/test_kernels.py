"""Compiled and numpy kernels must agree."""

import numpy as np
import pytest

from covnoise import _backend, _pykernels
from covnoise.covariance import Explicit, Zero
from covnoise.optimizer import RunConfig, run_quadratic, run_quadratic_batch
from covnoise.quadratic import TheoremDecay, make_quadratic, random_spd
from covnoise.rng import Rng

compiled = pytest.mark.skipif("cython" not in _backend.available(), reason="extension not built")


@compiled
def test_integer_streams_bit_identical():
    c = _backend.get("cython")
    for key in (0, 1, 2**63 + 5, 2**64 - 1):
        assert np.array_equal(c.stream_u64(key, 17, 1000), _pykernels.stream_u64(key, 17, 1000))
        assert np.array_equal(c.uniforms(key, 3, 500), _pykernels.uniforms(key, 3, 500))


@compiled
def test_normals_agree_to_an_ulp():
    c = _backend.get("cython")
    a = c.normals(99, 0, 10_000)
    b = _pykernels.normals(99, 0, 10_000)
    assert np.max(np.abs(a - b)) <= 4 * np.finfo(float).eps * np.max(np.abs(b))


@compiled
def test_quadratic_runs_agree_across_backends():
    p = make_quadratic(random_spd(5, Rng(3), 8.0))
    C = Explicit(p.sqrt())
    cfg = RunConfig(2000, TheoremDecay.for_problem(p), seed=4, log_every=50, record_params=True)
    a = run_quadratic(p, C, cfg, backend="cython")
    b = run_quadratic(p, C, cfg, backend="python")
    assert np.array_equal(a.step, b.step)
    assert np.allclose(a.loss, b.loss, rtol=1e-12, atol=1e-300)
    assert np.allclose(a.params, b.params, rtol=1e-12, atol=1e-15)


def test_kernel_matches_reference_loop(backend):
    """The vectorised kernel against a plain loop over counter-indexed normals."""
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    C = np.array([[1.0, 0.5], [0.0, 1.0]])
    alphas = np.full(30, 0.1)
    keys = np.array([Rng(8).key], dtype=np.uint64)
    steps = np.arange(31, dtype=np.int64)
    loss, gn, nn, params, ds, _ = _backend.get(backend).quadratic_pgd(
        A, C, np.ones((1, 2)), alphas, keys, 0, steps, True, 1e12
    )
    theta = np.ones(2)
    for k in range(1, 31):
        xi = _pykernels.normals(int(keys[0]), 2 * (k - 1) * 2, 2)
        theta = theta - 0.1 * (A @ theta) + 0.1 * (C @ xi)
        assert np.allclose(params[0, k], theta, rtol=1e-13, atol=1e-15)
    assert ds[0] == -1
    assert loss[0, 0] == 0.5 * np.ones(2) @ A @ np.ones(2)


def test_divergence_detected(backend):
    A = np.eye(1) * 10.0
    alphas = np.full(200, 1.0)  # |1 - 10| > 1: geometric blow-up
    keys = np.zeros(1, dtype=np.uint64)
    out = _backend.get(backend).quadratic_pgd(A, None, np.ones((1, 1)), alphas, keys, 0, np.arange(201), False, 1e12)
    ds = out[4][0]
    assert 1 <= ds <= 200
    assert out[5][0, 0] > 1e12


def test_batch_equals_single_runs(backend):
    p = make_quadratic([[2.0, 1.0], [1.0, 2.0]])
    cfg = RunConfig(300, TheoremDecay.for_problem(p), log_every=7)
    logs = run_quadratic_batch(p, Explicit(p.sqrt()), cfg, [0, 5, 9], backend=backend)
    for seed, log in zip([0, 5, 9], logs):
        single = run_quadratic(p, Explicit(p.sqrt()), RunConfig(300, cfg.schedule, seed=seed, log_every=7), backend=backend)
        assert np.array_equal(log.loss, single.loss)


def test_zero_noise_needs_no_matrix(backend):
    p = make_quadratic(np.eye(2))
    log = run_quadratic(p, Zero(2), RunConfig(5, TheoremDecay.for_problem(p)), backend=backend)
    assert np.all(log.noise_norm == 0)
