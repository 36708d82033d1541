import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covnoise.covariance import BatchScale, Isotropic
from covnoise.diagnostics import (
    avg_gradient_variance,
    frobenius_pair,
    hessian_vector_product,
    max_hessian_eigenvalue,
)
from covnoise.errors import BadBatchSize, EmptyBatch
from covnoise.harness.data import gen_blobs
from covnoise.network import init_mlp, loss_and_grad_fn, per_example_gradients
from covnoise.optimizer import NoiseRegime, RunConfig, run_mlp
from covnoise.quadratic import Constant
from covnoise.rng import Rng
from oracles import materialized_frobenius, quadratic_loss_fn, random_pd


@pytest.fixture(scope="module")
def trained():
    data = gen_blobs(60, 3, 3, 0.8, 0).batch
    mlp = init_mlp([3, 6, 3], Rng(0), "tanh")
    log = run_mlp(mlp, data, NoiseRegime("none"), RunConfig(100, Constant(0.5)))
    return mlp.with_params(log.meta["final_params"]), data


def test_frobenius_single_gradient():
    full, diag = frobenius_pair(np.array([[1.0, 2.0]]))
    assert full == pytest.approx(5.0, abs=1e-14)
    assert diag == pytest.approx(math.sqrt(17.0), abs=1e-14)


def test_frobenius_axis_aligned_equal():
    G = np.array([[3.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 1.0]])
    full, diag = frobenius_pair(G)
    assert full == pytest.approx(diag, rel=1e-15)


@given(st.integers(1, 12), st.integers(1, 50), st.integers(0, 2**31))
def test_frobenius_gram_matches_materialized(m, d, seed):
    G = np.random.default_rng(seed).standard_normal((m, d))
    full, diag = frobenius_pair(G)
    ref_full, ref_diag = materialized_frobenius(G)
    assert abs(full - ref_full) <= 1e-10 * max(1.0, ref_full)
    assert abs(diag - ref_diag) <= 1e-10 * max(1.0, ref_diag)
    assert diag <= full * (1 + 1e-12)


def test_frobenius_empty():
    with pytest.raises(EmptyBatch):
        frobenius_pair(np.zeros((0, 3)))


def test_frobenius_strict_on_trained_mlp(trained):
    mlp, data = trained
    full, diag = frobenius_pair(per_example_gradients(mlp, data))
    assert diag < full


def test_full_batch_no_noise_variance_is_zero(trained):
    mlp, data = trained
    rep = avg_gradient_variance(mlp, data, len(data), NoiseRegime("none"), 20, Rng(0))
    assert np.all(rep.variances == 0.0)
    assert [i for i, _ in rep.layers] == [0, 1]


def test_isotropic_noise_variance(trained):
    mlp, data = trained
    sigma2 = 0.3
    regime = NoiseRegime("fixed", spec=Isotropic(math.sqrt(sigma2), mlp.param_dim), termination_fraction=1.0)
    rep = avg_gradient_variance(mlp, data, len(data), regime, 10_000, Rng(5))
    assert np.all(np.abs(rep.variances - sigma2) <= 0.1 * sigma2)


def test_small_batch_matches_full_batch_plus_fisher(trained):
    mlp, data = trained
    n, m = len(data), 6
    sb = avg_gradient_variance(mlp, data, m, NoiseRegime("none"), 3000, Rng(1))
    lb = avg_gradient_variance(
        mlp, data, n, NoiseRegime("fisher_full", scale=BatchScale(n, m)), 3000, Rng(2)
    )
    assert np.all(np.abs(sb.variances - lb.variances) <= 0.25 * sb.variances)


def test_variance_invariant_to_draw_order(trained):
    # two independent streams are two orders of draws; agree within 3 stderr
    mlp, data = trained
    draws = 2000
    a = avg_gradient_variance(mlp, data, 5, NoiseRegime("none"), draws, Rng(11)).variances
    b = avg_gradient_variance(mlp, data, 5, NoiseRegime("none"), draws, Rng(12)).variances
    # variance of a sample variance is about 2 s^4/(n-1) for near-Gaussian data; use a loose kurtosis allowance
    se = np.sqrt(2 * (6 * a * a) / (draws - 1))
    assert np.all(np.abs(a - b) <= 3 * se)


def test_variance_bad_batch_size(trained):
    mlp, data = trained
    for bs in (0, len(data) + 1):
        with pytest.raises(BadBatchSize):
            avg_gradient_variance(mlp, data, bs, NoiseRegime("none"), 5, Rng(0))
    with pytest.raises(BadBatchSize):
        avg_gradient_variance(mlp, data, 4, NoiseRegime("none"), 1, Rng(0))


def test_hvp_quadratic(a21):
    fn = quadratic_loss_fn(a21)
    assert np.allclose(hessian_vector_product(fn, np.zeros(2), np.array([1.0, 0.0])), [2.0, 1.0], atol=1e-10)
    for h in (1e-6, 1e-2, 1.0):
        v = np.array([0.3, -0.7])
        assert np.allclose(hessian_vector_product(fn, np.array([1.0, 2.0]), v, h), a21 @ v, atol=1e-9)


def test_hvp_linear_in_v(trained):
    mlp, data = trained
    fn = loss_and_grad_fn(mlp, data)
    from covnoise.network import flatten

    theta = flatten(mlp)
    v = Rng(3).normal(theta.size)
    assert np.allclose(hessian_vector_product(fn, theta, 2 * v), 2 * hessian_vector_product(fn, theta, v), atol=1e-8)
    with pytest.raises(ValueError):
        hessian_vector_product(fn, theta, np.zeros_like(theta))


@pytest.mark.parametrize(
    "A, expected",
    [([[2.0, 1.0], [1.0, 2.0]], 3.0), (np.diag([1.0, 5.0, 10.0]), 10.0)],
)
def test_power_iteration_known(A, expected):
    est = max_hessian_eigenvalue(quadratic_loss_fn(A), np.zeros(len(A)), max_iters=500, tol=1e-9)
    assert est.converged
    assert est.lambda_max == pytest.approx(expected, abs=1e-6)


def test_power_iteration_identity_one_step():
    est = max_hessian_eigenvalue(quadratic_loss_fn(np.eye(4)), np.zeros(4))
    assert est.converged and est.iterations == 1
    assert est.lambda_max == pytest.approx(1.0, abs=1e-10)


def test_power_iteration_flags_nonconvergence():
    est = max_hessian_eigenvalue(quadratic_loss_fn(np.diag([1.0, 0.99])), np.zeros(2), max_iters=3, tol=1e-14)
    assert not est.converged and est.iterations == 3
    with pytest.raises(ValueError):
        max_hessian_eigenvalue(quadratic_loss_fn(np.eye(2)), np.zeros(2), max_iters=0)


@given(st.integers(2, 8), st.integers(0, 2**31))
def test_rayleigh_quotient_never_overshoots(d, seed):
    rng = np.random.default_rng(seed)
    A = random_pd(d, rng)
    top = np.linalg.eigvalsh(A)[-1]
    tol = 1e-6
    est = max_hessian_eigenvalue(quadratic_loss_fn(A), np.zeros(d), max_iters=50, tol=tol, rng=Rng(seed))
    assert est.lambda_max <= top * (1 + tol) + 1e-12
