import math

import numpy as np
import pytest

from covnoise.covariance import BatchScale, Explicit, Isotropic, Zero
from covnoise.errors import DimMismatch, NonFiniteLoss
from covnoise.harness.data import gen_blobs
from covnoise.network import init_mlp, per_example_gradients
from covnoise.optimizer import (
    NoiseRegime,
    RunConfig,
    TrajectoryLog,
    iterations_to_epsilon,
    logged_steps,
    pgd_step,
    regime_noise,
    run_mlp,
    run_quadratic,
    run_quadratic_batch,
)
from covnoise.quadratic import Constant, TheoremDecay, loss, make_quadratic, theorem_bound
from covnoise.rng import Rng


def toy_setup(n=30):
    data = gen_blobs(n, 3, 3, 0.8, 0)
    return init_mlp([3, 5, 3], Rng(1), "tanh"), data.batch


def test_pgd_step_examples():
    assert np.allclose(pgd_step([1.0, 0.0], [1.0, 0.0], 0.5, [0.0, 0.0]), [0.5, 0.0])
    assert np.array_equal(pgd_step([1.0, 2.0], [0.3, 0.4], 0.7, [0.3, 0.4]), [1.0, 2.0])


def test_pgd_step_small_alpha_displacement():
    th, g, e = np.array([1.0, -1.0]), np.array([3.0, 4.0]), np.array([-1.0, 2.0])
    a = 1e-3
    assert np.linalg.norm(pgd_step(th, g, a, e) - th) <= a * (np.linalg.norm(g) + np.linalg.norm(e)) + 1e-15


def test_pgd_step_errors():
    with pytest.raises(DimMismatch):
        pgd_step([1.0, 0.0], [1.0], 0.1, [0.0, 0.0])
    with pytest.raises(ValueError):
        pgd_step([1.0], [1.0], 0.0, [0.0])


def _log(losses):
    n = len(losses)
    z = np.zeros(n)
    return TrajectoryLog(np.arange(n) * 10, z, np.array(losses, dtype=float), z, z)


def test_iterations_to_epsilon():
    assert iterations_to_epsilon(_log([1.0, 0.5, 0.1]), 0.5) == 10
    assert iterations_to_epsilon(_log([1.0, 0.5, 0.1]), 2.0) == 0
    assert iterations_to_epsilon(_log([1.0, 0.5, 0.4]), 0.1) is None
    with pytest.raises(ValueError):
        iterations_to_epsilon(_log([1.0]), 0.0)


def test_logged_steps_include_endpoints():
    assert logged_steps(10, 3).tolist() == [0, 3, 6, 9, 10]
    assert logged_steps(10, 5).tolist() == [0, 5, 10]


def test_log_rows_and_alpha_column(a21):
    p = make_quadratic(a21)
    sched = TheoremDecay.for_problem(p)
    log = run_quadratic(p, Explicit(p.sqrt()), RunConfig(20, sched, log_every=4))
    assert log.step.tolist() == [0, 4, 8, 12, 16, 20]
    assert log.alpha[0] == 0.0 and log.noise_norm[0] == 0.0
    assert np.allclose(log.alpha[1:], [sched(k) for k in (4, 8, 12, 16, 20)])
    assert log.loss[0] == pytest.approx(3.0)
    assert len(list(log.rows())) == 6


def test_zero_noise_contracts_below_bound(a21):
    p = make_quadratic(a21)
    sched = TheoremDecay.for_problem(p)
    theta0 = np.array([3.0, -1.0])
    log = run_quadratic(p, Zero(2), RunConfig(1000, sched, log_every=10), theta0=theta0)
    bound = sched.gamma * loss(p, theta0) / (log.step + sched.gamma)
    assert np.all(log.loss <= bound * (1 + 1e-12))


def test_sqrt_noise_seed_mean_under_bound(a21):
    p = make_quadratic(a21)
    sched = TheoremDecay.for_problem(p)
    cfg = RunConfig(3000, sched, log_every=25)
    logs = run_quadratic_batch(p, Explicit(p.sqrt()), cfg, range(100))
    mean = np.mean([lg.loss for lg in logs], axis=0)
    bound = theorem_bound(p, p.sqrt(), np.ones(2), sched.gamma, logs[0].step)
    assert np.all(mean <= 1.05 * bound)


def test_quadratic_reproducible(a21):
    p = make_quadratic(a21)
    cfg = RunConfig(200, Constant(0.1), seed=17, record_params=True)
    a = run_quadratic(p, Isotropic(0.5, 2), cfg)
    b = run_quadratic(p, Isotropic(0.5, 2), cfg)
    assert np.array_equal(a.loss, b.loss) and np.array_equal(a.params, b.params)


def test_noise_leaves_mean_iterate_unchanged(a21):
    p = make_quadratic(a21)
    cfg = RunConfig(40, Constant(0.1), log_every=10, record_params=True)
    clean = run_quadratic(p, Zero(2), cfg, theta0=np.array([2.0, -1.0]))
    noisy = run_quadratic_batch(p, Explicit(p.sqrt()), cfg, range(1000), theta0=np.array([2.0, -1.0]))
    P = np.array([lg.params for lg in noisy])
    se = P.std(axis=0, ddof=1) / math.sqrt(len(noisy))
    assert np.all(np.abs(P.mean(axis=0) - clean.params) <= 3 * se + 1e-12)


def test_quadratic_divergence_raises():
    p = make_quadratic(np.eye(2) * 10)
    with pytest.raises(NonFiniteLoss) as e:
        run_quadratic(p, Zero(2), RunConfig(500, Constant(1.0)))
    log = e.value.log
    assert log.diverged_at == e.value.step and log.step[-1] == e.value.step
    assert log.loss[-1] > 1e12


def test_quadratic_dim_checks(a21):
    p = make_quadratic(a21)
    with pytest.raises(DimMismatch):
        run_quadratic(p, Zero(3), RunConfig(5, Constant(0.1)))
    with pytest.raises(DimMismatch):
        run_quadratic(p, Zero(2), RunConfig(5, Constant(0.1)), theta0=np.ones(3))


def test_regime_validation():
    with pytest.raises(ValueError):
        NoiseRegime("fisher_diag")
    with pytest.raises(ValueError):
        NoiseRegime("none", termination_fraction=1.5)
    with pytest.raises(ValueError):
        NoiseRegime("sgld")
    assert NoiseRegime("fisher_full", scale=BatchScale(8, 2)).noisy_steps(10) == 3
    assert NoiseRegime("none").noisy_steps(10) == 0


def test_mlp_none_equals_fixed_zero():
    mlp, batch = toy_setup()
    cfg = RunConfig(30, Constant(0.3), seed=2, record_params=True)
    a = run_mlp(mlp, batch, NoiseRegime("none"), cfg)
    b = run_mlp(mlp, batch, NoiseRegime("fixed", spec=Zero(mlp.param_dim), termination_fraction=1.0), cfg)
    assert np.array_equal(a.loss, b.loss) and np.array_equal(a.params, b.params)


def test_mlp_zero_gap_equals_none():
    mlp, batch = toy_setup()
    cfg = RunConfig(30, Constant(0.3), seed=2)
    a = run_mlp(mlp, batch, NoiseRegime("none"), cfg)
    for kind in ("fisher_diag", "fisher_full", "fisher_rademacher", "true_fisher", "fisher_trace"):
        b = run_mlp(mlp, batch, NoiseRegime(kind, scale=BatchScale(16, 16), termination_fraction=1.0), cfg)
        assert np.array_equal(a.loss, b.loss), kind


def test_mlp_noise_stops_after_termination():
    mlp, batch = toy_setup()
    regime = NoiseRegime("fisher_diag", scale=BatchScale(30, 2), termination_fraction=0.25)
    log = run_mlp(mlp, batch, regime, RunConfig(20, Constant(0.3), seed=1))
    assert np.all(log.noise_norm[1:6] > 0)
    assert np.all(log.noise_norm[6:] == 0)


def test_mlp_noise_changes_trajectory():
    mlp, batch = toy_setup()
    cfg = RunConfig(10, Constant(0.3), seed=1)
    a = run_mlp(mlp, batch, NoiseRegime("none"), cfg)
    for kind in ("fisher_diag", "fisher_full", "fisher_rademacher", "true_fisher", "fisher_trace"):
        b = run_mlp(mlp, batch, NoiseRegime(kind, scale=BatchScale(30, 4), termination_fraction=1.0), cfg)
        assert np.all(np.isfinite(b.loss)) and not np.array_equal(a.loss, b.loss), kind


def test_mlp_large_batch_subsampling():
    mlp, batch = toy_setup()
    cfg = RunConfig(10, Constant(0.3), seed=1)
    a = run_mlp(mlp, batch, NoiseRegime("none"), cfg, large_batch=10)
    b = run_mlp(mlp, batch, NoiseRegime("none"), cfg, large_batch=10)
    full = run_mlp(mlp, batch, NoiseRegime("none"), cfg)
    assert np.array_equal(a.loss, b.loss) and not np.array_equal(a.loss, full.loss)
    with pytest.raises(ValueError):
        run_mlp(mlp, batch, NoiseRegime("none"), cfg, large_batch=100)


def test_mlp_reproducible_and_logged_loss_is_full_data_loss():
    from covnoise.network import mean_loss

    mlp, batch = toy_setup()
    cfg = RunConfig(12, Constant(0.3), seed=3, log_every=4)
    regime = NoiseRegime("fisher_full", scale=BatchScale(30, 4), termination_fraction=1.0)
    a = run_mlp(mlp, batch, regime, cfg)
    b = run_mlp(mlp, batch, regime, cfg)
    assert np.array_equal(a.loss, b.loss)
    final = mlp.with_params(a.meta["final_params"])
    assert a.loss[-1] == pytest.approx(mean_loss(final, batch), rel=1e-12)


def test_mlp_divergence_attaches_log():
    mlp, batch = toy_setup()
    regime = NoiseRegime("fixed", spec=Isotropic(1e40, mlp.param_dim), termination_fraction=1.0)
    with pytest.raises(NonFiniteLoss) as e:
        run_mlp(mlp, batch, regime, RunConfig(50, Constant(1.0)))
    assert e.value.log.diverged_at == e.value.step
    assert e.value.log.step[-1] == e.value.step


def test_regime_noise_shapes():
    mlp, batch = toy_setup()
    grads = per_example_gradients(mlp, batch)
    for kind in ("fisher_full", "fisher_diag", "fisher_rademacher", "fisher_trace", "true_fisher"):
        x = regime_noise(NoiseRegime(kind, scale=BatchScale(30, 4)), mlp, grads, batch.inputs, Rng(0))
        assert x.shape == (mlp.param_dim,) and np.all(np.isfinite(x))
