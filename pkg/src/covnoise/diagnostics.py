"""Measurements on Fisher noise and curvature.

Frobenius norms of the full and diagonal empirical Fisher, Monte-Carlo
per-layer gradient variance under each noise regime, and the top Hessian
eigenvalue by power iteration on finite-difference Hessian-vector products.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadBatchSize, EmptyBatch
from .network import per_example_gradients
from .optimizer import regime_noise, regime_spec
from .rng import Rng


@dataclass
class VarianceReport:
    layers: list  # (layer index, mean per-parameter variance)
    meta: dict = field(default_factory=dict)

    @property
    def variances(self):
        return np.array([v for _, v in self.layers])


@dataclass
class EigenEstimate:
    lambda_max: float
    iterations: int
    residual: float
    converged: bool


def frobenius_pair(grads):
    """(||F||_F, ||diag F||_F) for F = (1/M) sum g_i g_i^T, without forming F.

    ||F||_F^2 = (1/M^2) sum_ij (g_i . g_j)^2 via the M x M Gram matrix.
    """
    G = grads.matrix if hasattr(grads, "matrix") else np.asarray(grads, dtype=np.float64)
    G = np.atleast_2d(G)
    m = G.shape[0]
    if m == 0:
        raise EmptyBatch("no per-example gradients")
    gram = G @ G.T
    full = np.sqrt(np.sum(gram * gram)) / m
    diag = np.linalg.norm(np.sum(G * G, axis=0) / m)
    return float(full), float(diag)


def avg_gradient_variance(mlp, data, batch_size, regime, draws, rng):
    """Per-layer mean of the per-parameter variance of the update direction.

    Each draw takes ``batch_size`` samples without replacement (the whole set,
    in order, when ``batch_size == len(data)``), forms the batch gradient minus
    the regime's noise ``C xi`` (so the update is ``-alpha`` times it), and the
    variance across draws is accumulated with Welford's update.
    """
    n = len(data)
    if not 1 <= batch_size <= n:
        raise BadBatchSize(f"batch_size {batch_size} outside [1, {n}]")
    if draws < 2:
        raise BadBatchSize("need at least two draws for a variance")
    full = per_example_gradients(mlp, data)
    d = full.dim
    fixed_spec = regime_spec(regime, full) if batch_size == n else None

    mean = np.zeros(d)
    m2 = np.zeros(d)
    for t in range(1, draws + 1):
        if batch_size == n:
            grads, inputs = full, data.inputs
            direction = full.mean()
        else:
            idx = np.sort(rng.sample_without_replacement(n, batch_size))
            grads = per_example_gradients(mlp, data.subset(idx))
            inputs = data.inputs[idx]
            direction = grads.mean()
        if regime.kind != "none":
            direction = direction - regime_noise(regime, mlp, grads, inputs, rng, spec=fixed_spec)
        delta = direction - mean
        mean += delta / t
        m2 += delta * (direction - mean)
    var = m2 / (draws - 1)
    layers = [(i, float(np.mean(var[sl]))) for i, sl in enumerate(mlp.layer_slices())]
    return VarianceReport(layers, {"batch_size": batch_size, "draws": draws, "regime": regime.kind})


def hessian_vector_product(loss_fn, theta, v, h=None):
    """Central-difference H v from a ``theta -> (loss, grad)`` callable.

    Differencing is along the unit vector v/|v| with step h (default
    1e-4 (1 + |theta|)); exact up to rounding for quadratic losses.
    """
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("v must be nonzero")
    if h is None:
        h = 1e-4 * (1.0 + np.linalg.norm(theta))
    u = v / nv
    _, g_plus = loss_fn(theta + h * u)
    _, g_minus = loss_fn(theta - h * u)
    return (np.asarray(g_plus) - np.asarray(g_minus)) / (2.0 * h) * nv


def max_hessian_eigenvalue(loss_fn, theta, max_iters=200, tol=1e-6, rng=None, h=None):
    """Power iteration on Hessian-vector products from a random unit start.

    Stops when ``|Hv - lambda v| / |lambda| <= tol`` with lambda the Rayleigh
    quotient; otherwise returns the last estimate with ``converged=False``.
    This finds the eigenvalue of largest magnitude.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    rng = Rng(0) if rng is None else rng
    v = rng.normal(theta.shape[0])
    v /= np.linalg.norm(v)
    lam, res = 0.0, np.inf
    for it in range(1, max_iters + 1):
        w = hessian_vector_product(loss_fn, theta, v, h)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v) / abs(lam)) if lam != 0 else np.inf
        if res <= tol:
            return EigenEstimate(lam, it, res, True)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    return EigenEstimate(lam, it, res, False)
