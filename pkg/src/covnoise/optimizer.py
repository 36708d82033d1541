"""Perturbed gradient descent.

Step k (k = 1..K) maps theta_{k-1} to

    theta_k = theta_{k-1} - alpha_k grad L(theta_{k-1}) + alpha_k C_k xi_k,

with C_k fixed (quadratic runs) or rebuilt from the current per-example
gradients (MLP runs). Row k of a ``TrajectoryLog`` describes theta_k together
with the step size and injected perturbation ``alpha_k C_k xi_k`` that produced
it; row 0 is the starting point with alpha = noise_norm = 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .covariance import (
    BatchScale,
    CovarianceSpec,
    DiagonalSqrt,
    MatrixSqrt,
    TraceIsotropic,
    Zero,
    batch_scale_factor,
    sample_noise,
)
from .errors import DimMismatch, NonFiniteLoss
from .fisher import empirical_fisher_full, rademacher_fisher_noise, true_fisher_noise
from .network import Batch, flatten, per_example_gradients, log_softmax, forward_batch
from .rng import Rng

DIVERGENCE_LIMIT = 1e12

REGIME_KINDS = (
    "none",
    "fixed",
    "fisher_full",
    "fisher_diag",
    "fisher_rademacher",
    "fisher_trace",
    "true_fisher",
)


@dataclass(frozen=True)
class NoiseRegime:
    kind: str = "none"
    spec: CovarianceSpec = None
    scale: BatchScale = None
    termination_fraction: float = 0.25

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise ValueError(f"unknown regime {self.kind!r}")
        if not 0.0 <= self.termination_fraction <= 1.0:
            raise ValueError("termination_fraction must lie in [0, 1]")
        if self.kind == "fixed" and self.spec is None:
            raise ValueError("fixed regime needs a CovarianceSpec")
        if self.kind.startswith("fisher") or self.kind == "true_fisher":
            if self.scale is None:
                raise ValueError(f"{self.kind} regime needs a BatchScale")

    def noisy_steps(self, steps):
        """Number of leading steps that receive noise."""
        if self.kind == "none":
            return 0
        return math.ceil(self.termination_fraction * steps)


@dataclass(frozen=True)
class RunConfig:
    steps: int
    schedule: object
    seed: int = 0
    log_every: int = 1
    record_params: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass(eq=False)
class TrajectoryLog:
    step: np.ndarray
    alpha: np.ndarray
    loss: np.ndarray
    grad_norm: np.ndarray
    noise_norm: np.ndarray
    params: np.ndarray = None
    diverged_at: int = None
    meta: dict = field(default_factory=dict)

    COLUMNS = ("step", "alpha", "loss", "grad_norm", "noise_norm")

    def __len__(self):
        return len(self.step)

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.step[i]),
                float(self.alpha[i]),
                float(self.loss[i]),
                float(self.grad_norm[i]),
                float(self.noise_norm[i]),
            )

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), z, z, z, z)


def logged_steps(steps, log_every):
    s = list(range(0, steps + 1, log_every))
    if s[-1] != steps:
        s.append(steps)
    return np.asarray(s, dtype=np.int64)


def pgd_step(theta, grad, alpha, noise):
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if not theta.shape == grad.shape == noise.shape:
        raise DimMismatch(f"shapes {theta.shape}, {grad.shape}, {noise.shape} differ")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return theta - alpha * grad + alpha * noise


def iterations_to_epsilon(log, eps):
    """Smallest logged step with loss <= eps, or None when never reached."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    hit = np.nonzero(np.asarray(log.loss) <= eps)[0]
    return int(log.step[hit[0]]) if hit.size else None


def _alpha_column(steps, alphas):
    col = np.zeros(len(steps))
    pos = steps > 0
    col[pos] = alphas[steps[pos] - 1]
    return col


def run_quadratic_batch(p, C, cfg, seeds, theta0=None, backend=None):
    """Independent runs for each seed; results match ``run_quadratic`` seed by seed.

    Diverged runs come back with ``diverged_at`` set instead of raising.
    """
    kern = _backend.get(backend)
    d = p.dim
    theta0 = np.ones(d) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    if theta0.shape != (d,):
        raise DimMismatch(f"theta0 has shape {theta0.shape}, expected ({d},)")
    if C.dim != d:
        raise DimMismatch(f"noise spec has dim {C.dim}, problem has {d}")
    seeds = [int(s) for s in seeds]
    rngs = [Rng(s) for s in seeds]
    keys = np.array([r.key for r in rngs], dtype=np.uint64)
    alphas = np.asarray(cfg.schedule.alphas(cfg.steps), dtype=np.float64)
    steps = logged_steps(cfg.steps, cfg.log_every)
    cmat = None if C.is_zero else C.matrix()
    th0 = np.tile(theta0, (len(seeds), 1))
    loss, gn, nn, params, div_step, div_row = kern.quadratic_pgd(
        p.A, cmat, th0, alphas, keys, 0, steps, cfg.record_params, DIVERGENCE_LIMIT
    )
    alpha_col = _alpha_column(steps, alphas)
    logs = []
    for s in range(len(seeds)):
        keep = slice(None)
        ds = int(div_step[s])
        if ds >= 0:
            keep = steps < ds
        log = TrajectoryLog(
            steps[keep].copy(),
            alpha_col[keep].copy(),
            loss[s][keep].copy(),
            gn[s][keep].copy(),
            nn[s][keep].copy(),
            params[s][keep].copy() if params is not None else None,
            meta={"seed": seeds[s]},
        )
        if ds >= 0:
            a = alphas[ds - 1] if ds > 0 else 0.0
            log.step = np.append(log.step, ds)
            log.alpha = np.append(log.alpha, a)
            log.loss = np.append(log.loss, div_row[s, 0])
            log.grad_norm = np.append(log.grad_norm, div_row[s, 1])
            log.noise_norm = np.append(log.noise_norm, div_row[s, 2])
            if log.params is not None:
                log.params = np.vstack([log.params, np.full((1, d), np.nan)])
            log.diverged_at = ds
        logs.append(log)
    return logs


def run_quadratic(p, C, cfg, theta0=None, backend=None):
    """Run perturbed GD on L = 1/2 theta^T A theta with exact gradients and fresh noise each step."""
    (log,) = run_quadratic_batch(p, C, cfg, [cfg.seed], theta0=theta0, backend=backend)
    if log.diverged_at is not None:
        raise NonFiniteLoss(log.diverged_at, float(log.loss[-1]), log)
    return log


def regime_spec(regime, grads):
    """Covariance spec of the regime's noise at the given per-example gradients.

    Returns None for the sampler-based regimes (Rademacher, true Fisher), which
    never form C.
    """
    kind = regime.kind
    d = grads.dim
    if kind == "none":
        return Zero(d)
    if kind == "fixed":
        return regime.spec
    if kind in ("fisher_rademacher", "true_fisher"):
        return None
    s2 = batch_scale_factor(regime.scale) ** 2
    if s2 == 0.0:
        return Zero(d)
    G = grads.matrix
    if kind == "fisher_full":
        return MatrixSqrt(s2 * empirical_fisher_full(G).F)
    if kind == "fisher_diag":
        return DiagonalSqrt(s2 * np.mean(G * G, axis=0))
    return TraceIsotropic(s2 * float(np.sum(G * G)) / G.shape[0], d)


def regime_noise(regime, mlp, grads, inputs, rng, spec=None):
    """The vector C xi for one step (before multiplying by the step size).

    ``spec`` short-circuits ``regime_spec`` when the caller already has it.
    """
    if spec is None:
        spec = regime_spec(regime, grads)
    if spec is not None:
        return sample_noise(spec, rng)
    s = batch_scale_factor(regime.scale)
    if s == 0.0:
        return np.zeros(grads.dim)
    if regime.kind == "fisher_rademacher":
        return s * rademacher_fisher_noise(grads.matrix, rng)
    return s * true_fisher_noise(mlp, inputs, rng)


def _full_loss_and_grads(mlp, data):
    grads = per_example_gradients(mlp, data)
    logits, _ = forward_batch(mlp, data.inputs)
    loss = float(np.mean(-log_softmax(logits)[np.arange(len(data)), data.labels]))
    return loss, grads


def run_mlp(mlp0, data: Batch, regime: NoiseRegime, cfg: RunConfig, large_batch=None):
    """Train ``mlp0`` on ``data`` with the regime's noise: large-batch gradient plus injected noise each step.

    The gradient is the full-dataset gradient unless ``large_batch`` is given,
    in which case a fresh subsample of that size (without replacement) is drawn
    every step and used for both the gradient and the Fisher estimate.
    """
    rng = Rng(cfg.seed)
    n = len(data)
    if large_batch is not None and not 1 <= large_batch <= n:
        raise ValueError(f"large_batch {large_batch} outside [1, {n}]")
    if regime.kind == "fixed" and regime.spec.dim != mlp0.param_dim:
        raise DimMismatch("fixed noise spec does not match the parameter dimension")
    K = cfg.steps
    alphas = np.asarray(cfg.schedule.alphas(K), dtype=np.float64)
    noisy = regime.noisy_steps(K)
    want = set(logged_steps(K, cfg.log_every).tolist())

    mlp = mlp0
    theta = flatten(mlp)
    loss, grads = _full_loss_and_grads(mlp, data)
    rows, snaps = [], []

    def record(k, a, nn):
        g = grads.mean()
        rows.append((k, a, loss, float(np.linalg.norm(g)), nn))
        if cfg.record_params:
            snaps.append(theta.copy())

    def build(diverged=None):
        arr = np.array(rows, dtype=np.float64).reshape(-1, 5)
        return TrajectoryLog(
            arr[:, 0].astype(np.int64),
            arr[:, 1],
            arr[:, 2],
            arr[:, 3],
            arr[:, 4],
            np.array(snaps) if cfg.record_params else None,
            diverged_at=diverged,
            meta={"seed": cfg.seed, "regime": regime.kind},
        )

    record(0, 0.0, 0.0)
    for k in range(1, K + 1):
        if large_batch is None or large_batch == n:
            lb_grads, lb_inputs = grads, data.inputs
        else:
            idx = rng.sample_without_replacement(n, large_batch)
            sub = data.subset(idx)
            lb_grads, lb_inputs = per_example_gradients(mlp, sub), sub.inputs
        a = float(alphas[k - 1])
        if k <= noisy:
            noise = regime_noise(regime, mlp, lb_grads, lb_inputs, rng)
        else:
            noise = np.zeros(theta.shape[0])
        theta = pgd_step(theta, lb_grads.mean(), a, noise)
        mlp = mlp.with_params(theta)
        nn = a * float(np.linalg.norm(noise))
        loss, grads = _full_loss_and_grads(mlp, data)
        if not (math.isfinite(loss) and loss <= DIVERGENCE_LIMIT):
            rows.append((k, a, loss, float("nan"), nn))
            if cfg.record_params:
                snaps.append(theta.copy())
            raise NonFiniteLoss(k, loss, build(diverged=k))
        if k in want:
            record(k, a, nn)
    log = build()
    log.meta["final_params"] = theta
    return log
