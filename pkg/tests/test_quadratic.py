import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from covnoise.errors import DimMismatch, InvalidGamma, NotPositiveDefinite, NotSymmetric
from covnoise.quadratic import (
    Constant,
    TheoremDecay,
    gamma_for,
    gradient,
    loss,
    make_quadratic,
    random_spd,
    theorem_bound,
    theorem_nu,
    theorem_step_size,
    trace_ctac,
)
from covnoise.rng import Rng

seeds = st.integers(0, 2**32)


def spd(seed, dim):
    return make_quadratic(random_spd(dim, Rng(seed), 20.0))


def test_identity_problem():
    p = make_quadratic(np.eye(2))
    assert np.allclose(p.spectrum.eigenvalues, [1.0, 1.0])


def test_eigenvalues_of_a21(a21):
    p = make_quadratic(a21)
    # roots of x^2 - 4x + 3
    assert np.allclose(p.spectrum.eigenvalues, [1.0, 3.0])
    assert p.lambda_min == pytest.approx(1.0) and p.lambda_max == pytest.approx(3.0)


def test_indefinite_rejected():
    with pytest.raises(NotPositiveDefinite):
        make_quadratic([[1.0, 2.0], [2.0, 1.0]])


def test_asymmetric_rejected():
    with pytest.raises(NotSymmetric):
        make_quadratic([[2.0, 1.0], [0.0, 2.0]])


def test_tiny_asymmetry_symmetrized():
    p = make_quadratic([[2.0, 1.0 + 1e-12], [1.0, 2.0]])
    assert np.array_equal(p.A, p.A.T)


def test_non_square_rejected():
    with pytest.raises(DimMismatch):
        make_quadratic(np.ones((2, 3)))


def test_problem_is_read_only(a21):
    p = make_quadratic(a21)
    with pytest.raises(ValueError):
        p.A[0, 0] = 5.0


@pytest.mark.parametrize(
    "A,theta,expected",
    [(np.eye(2), (0, 0), 0.0), (np.eye(2), (1, 1), 1.0), ([[2, 1], [1, 2]], (1, 0), 1.0)],
)
def test_loss_values(A, theta, expected):
    assert loss(make_quadratic(A), theta) == pytest.approx(expected)


def test_gradient_values(a21):
    assert np.allclose(gradient(make_quadratic(np.eye(2)), [3, -2]), [3, -2])
    assert np.allclose(gradient(make_quadratic(a21), [1, 0]), [2, 1])
    assert np.allclose(gradient(make_quadratic(a21), [0, 0]), [0, 0])


def test_dim_mismatch(a21):
    with pytest.raises(DimMismatch):
        loss(make_quadratic(a21), [1.0, 2.0, 3.0])
    with pytest.raises(DimMismatch):
        gradient(make_quadratic(a21), [1.0])


@given(seeds, st.integers(1, 8))
def test_gradient_matches_finite_differences(seed, dim):
    p = spd(seed, dim)
    theta = Rng(seed + 1).normal(dim)
    h = 1e-5
    fd = np.array([(loss(p, theta + h * e) - loss(p, theta - h * e)) / (2 * h) for e in np.eye(dim)])
    g = gradient(p, theta)
    assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


@given(seeds, st.integers(1, 12))
def test_spectrum_invariants(seed, dim):
    p = spd(seed, dim)
    P, w = p.spectrum.eigenvectors, p.spectrum.eigenvalues
    assert np.linalg.norm(P.T @ P - np.eye(dim)) <= 1e-10
    assert np.all(np.diff(w) >= 0) and w[0] > 0
    assert np.linalg.norm(p.spectrum.reconstruct() - p.A) <= 1e-10 * np.linalg.norm(p.A)


def test_step_size_values():
    assert theorem_step_size(3, 2, 1) == pytest.approx(0.4)
    assert theorem_step_size(1, 1, 2) == pytest.approx(0.5)
    ks = [theorem_step_size(k, 5, 1.0) for k in range(1, 1000)]
    assert all(a > b for a, b in zip(ks, ks[1:])) and ks[-1] < 3e-3


def test_gamma_rule_for_a21(a21):
    sched = TheoremDecay.for_problem(make_quadratic(a21))
    # alpha0 = 1/3, lambda_min = 1: ceil(2 * 3 - 1) = 5
    assert sched.gamma == 5 and sched.alpha0 == pytest.approx(1 / 3)
    assert sched(1) == pytest.approx(1 / 3)


@given(st.floats(1e-3, 10.0), st.floats(1e-2, 100.0))
def test_gamma_rule_respects_alpha0(alpha0, lam):
    g = gamma_for(alpha0, lam)
    assert g >= 1
    assert theorem_step_size(1, g, lam) <= alpha0 * (1 + 1e-9)
    if g > 1:  # minimality
        assert theorem_step_size(1, g - 1, lam) > alpha0 * (1 - 1e-9)


def test_schedule_rejects_large_first_step():
    with pytest.raises(InvalidGamma):
        TheoremDecay(1.0, 1.0, 0.1)
    with pytest.raises(InvalidGamma):
        TheoremDecay.for_problem(make_quadratic(np.eye(2) * 4.0), alpha0=0.5)


def test_schedule_arrays():
    s = TheoremDecay(5, 1.0, 1 / 3)
    assert np.allclose(s.alphas(4), [2 / 6, 2 / 7, 2 / 8, 2 / 9])
    assert np.array_equal(Constant(0.1).alphas(3), [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        Constant(0.0)


def test_trace_ctac_values(a21):
    p = make_quadratic(a21)
    assert trace_ctac(np.zeros((2, 2)), p) == 0.0
    assert trace_ctac(p.sqrt(), p) == pytest.approx(10.0)
    assert trace_ctac(np.diag([math.sqrt(2)] * 2), p) == pytest.approx(8.0)
    with pytest.raises(DimMismatch):
        trace_ctac(np.eye(3), p)


@given(seeds, st.integers(1, 20))
def test_trace_ctac_frobenius_identities(seed, dim):
    p = spd(seed, dim)
    fro = np.sum(p.A**2)
    dfro = np.sum(np.diag(p.A) ** 2)
    assert trace_ctac(p.sqrt(), p) == pytest.approx(fro, rel=1e-10)
    assert trace_ctac(p.sqrt_diag(), p) == pytest.approx(dfro, rel=1e-10)
    assert dfro <= fro * (1 + 1e-12)
    if dim > 1:  # random rotations leave off-diagonal mass
        assert dfro < fro


def test_bound_identity_case():
    p = make_quadratic(np.eye(2))
    # nu = max(2 * 2 / 1, 2 * 1) = 4
    assert theorem_nu(p, np.eye(2), [1, 1], 2) == pytest.approx(4.0)
    assert theorem_bound(p, np.eye(2), [1, 1], 2, 0) == pytest.approx(2.0)


def test_bound_without_noise(a21):
    p = make_quadratic(a21)
    theta0 = np.array([1.0, -3.0])
    b = theorem_bound(p, np.zeros((2, 2)), theta0, 5, np.array([0, 10, 100]))
    assert np.allclose(b, 5 * loss(p, theta0) / (np.array([0, 10, 100]) + 5))


def test_bound_decays_like_one_over_k(a21):
    p = make_quadratic(a21)
    b1 = theorem_bound(p, p.sqrt(), [1, 1], 5, 10**6)
    b2 = theorem_bound(p, p.sqrt(), [1, 1], 5, 2 * 10**6)
    assert b2 / b1 == pytest.approx(0.5, rel=1e-5)


def test_bound_rejects_small_gamma(a21):
    with pytest.raises(InvalidGamma):
        theorem_bound(make_quadratic(a21), np.eye(2), [1, 1], 4, 0)
