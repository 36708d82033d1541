"""Empirical Fisher estimators and Fisher-covariance noise samplers."""

from dataclasses import dataclass

import numpy as np

from .covariance import BatchScale, DiagonalSqrt, MatrixSqrt, Zero, batch_scale_factor
from .errors import EmptyBatch, FisherTooLarge, MissingActivations
from .network import Batch, per_example_gradients, softmax, forward_batch

MAX_FULL_DIM = 5000


@dataclass(frozen=True, eq=False)
class EmpiricalFisherFull:
    F: np.ndarray
    scale: float = 1.0
    centered: bool = False

    @property
    def matrix(self):
        return self.scale * self.F


@dataclass(frozen=True, eq=False)
class FisherDiagonal:
    v: np.ndarray


def _rows(grads):
    G = grads.matrix if hasattr(grads, "matrix") else np.asarray(grads, dtype=np.float64)
    G = np.atleast_2d(G)
    if G.shape[0] == 0:
        raise EmptyBatch("no per-example gradients")
    return G


def empirical_fisher_full(grads, centered=False):
    """(1/M) sum_i g_i g_i^T, or the centered covariance of the rows with ``centered=True``.

    ``grads`` is a ``PerExampleGrads`` or an (M, d) array.
    """
    G = _rows(grads)
    if G.shape[1] > MAX_FULL_DIM:
        raise FisherTooLarge(f"d={G.shape[1]} exceeds {MAX_FULL_DIM}; use the diagonal or Rademacher paths")
    if centered:
        G = G - G.mean(axis=0)
    F = G.T @ G / G.shape[0]
    return EmpiricalFisherFull(0.5 * (F + F.T), centered=centered)


def sgd_noise_covariance(grads, batch_size):
    """Covariance of (full-batch grad - minibatch grad) for minibatches of ``batch_size``:
    ((M - m) / (m M)) times the centered second moment (1/M) sum_i (g_bar - g_i)(g_bar - g_i)^T.

    The multiplier matches ``batch_scale_factor(BatchScale(M, m)) ** 2``; exact
    sampling without replacement differs by the finite-population factor M / (M - 1).
    """
    G = _rows(grads)
    n = G.shape[0]
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size {batch_size} outside [1, {n}]")
    D = G - G.mean(axis=0)
    return (n - batch_size) / (batch_size * n) * (D.T @ D) / n


def fisher_diagonal_direct(grads):
    """Diagonal of the empirical Fisher from the per-layer (a, g) factors.

    Per layer the block is the sample mean of the outer product of g^2 and a^2,
    laid out like the flattened weights; the d x d matrix is never formed.
    """
    if getattr(grads, "layer_inputs", None) is None or getattr(grads, "layer_deltas", None) is None:
        raise MissingActivations("per-example gradients were built without layer factors")
    if grads.count == 0:
        raise EmptyBatch("no per-example gradients")
    blocks = []
    for a, g in zip(grads.layer_inputs, grads.layer_deltas):
        blocks.append(np.einsum("nj,ni->ji", a * a, g * g).ravel() / a.shape[0])
    return FisherDiagonal(np.concatenate(blocks))


def rademacher_fisher_noise(grads, rng):
    """(1/sqrt(M)) sum_i sigma_i g_i with Rademacher signs; covariance is the empirical Fisher."""
    G = _rows(grads)
    sigma = rng.rademacher(G.shape[0])
    return sigma @ G / np.sqrt(G.shape[0])


def true_fisher_noise(mlp, inputs, rng):
    """Backpropagate -log p(y_hat | x) with y_hat drawn from the model; (1/sqrt(M)) sum over inputs.

    Mean zero over the label draw; covariance is the model (true) Fisher averaged over inputs.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyBatch("no inputs")
    logits, _ = forward_batch(mlp, X)
    labels = rng.categorical(softmax(logits))
    G = per_example_gradients(mlp, Batch(X, labels)).matrix
    return G.sum(axis=0) / np.sqrt(X.shape[0])


def fisher_covariance_specs(grads, bs: BatchScale):
    """(MatrixSqrt(s^2 F), DiagonalSqrt(s^2 diag F)) with s the batch scale factor."""
    G = _rows(grads)
    s2 = batch_scale_factor(bs) ** 2
    d = G.shape[1]
    if s2 == 0.0:
        return Zero(d), Zero(d)
    F = empirical_fisher_full(G).F
    return MatrixSqrt(s2 * F), DiagonalSqrt(s2 * np.mean(G * G, axis=0))
