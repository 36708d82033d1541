"""Convex quadratic testbed L(theta) = 1/2 theta^T A theta.

Holds the problem type, its cached eigendecomposition, the decaying step-size
schedule ``alpha_k = 2 / ((k + gamma) lambda_min)`` and the constants of the
matching O(1/k) bound on the expected loss.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, InvalidGamma, NotPositiveDefinite, NotSymmetric

ASYMMETRY_RTOL = 1e-8
MIN_EIGENVALUE = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns match eigenvalues

    @classmethod
    def of(cls, S):
        w, P = np.linalg.eigh(S)
        order = np.argsort(w, kind="stable")
        return cls(w[order], P[:, order])

    def reconstruct(self, fn=None):
        """Return P f(D) P^T; identity ``fn`` gives back the matrix."""
        w = self.eigenvalues if fn is None else fn(self.eigenvalues)
        P = self.eigenvectors
        return (P * w) @ P.T


@dataclass(frozen=True)
class QuadraticProblem:
    A: np.ndarray
    spectrum: SpectralDecomposition = field(repr=False)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def lambda_min(self):
        return float(self.spectrum.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.spectrum.eigenvalues[-1])

    def sqrt(self):
        return self.spectrum.reconstruct(np.sqrt)

    def sqrt_diag(self):
        return np.diag(np.sqrt(np.diag(self.A)))


def make_quadratic(A):
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimMismatch(f"A must be square, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > ASYMMETRY_RTOL * scale:
        raise NotSymmetric("A is not symmetric")
    A = 0.5 * (A + A.T)
    spectrum = SpectralDecomposition.of(A)
    if spectrum.eigenvalues[0] <= MIN_EIGENVALUE:
        raise NotPositiveDefinite(f"minimum eigenvalue {spectrum.eigenvalues[0]:.6g} is not positive")
    A.setflags(write=False)
    return QuadraticProblem(A, spectrum)


def random_spd(dim, rng, cond=10.0):
    """Random SPD matrix with eigenvalues log-spaced in [1, cond] and a random rotation.

    ``rng`` is a ``covnoise.rng.Rng``.
    """
    G = rng.normal(dim * dim).reshape(dim, dim)
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))
    w = np.geomspace(1.0, cond, dim) if dim > 1 else np.ones(1)
    return (Q * w) @ Q.T


def _check_theta(p, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (p.dim,):
        raise DimMismatch(f"theta has shape {theta.shape}, expected ({p.dim},)")
    return theta


def loss(p, theta):
    theta = _check_theta(p, theta)
    return 0.5 * float(theta @ p.A @ theta)


def gradient(p, theta):
    return p.A @ _check_theta(p, theta)


def theorem_step_size(k, gamma, lambda_min):
    if k < 1 or gamma <= 0 or lambda_min <= 0:
        raise ValueError("need k >= 1, gamma > 0, lambda_min > 0")
    return 2.0 / ((k + gamma) * lambda_min)


def gamma_for(alpha0, lambda_min):
    """Smallest integer gamma >= 1 with alpha_k <= alpha0 for every k >= 1."""
    return max(1, math.ceil(2.0 / (alpha0 * lambda_min) - 1.0 - 1e-12))


@dataclass(frozen=True)
class Constant:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("step size must be positive")

    def __call__(self, k):
        return self.alpha

    def alphas(self, steps):
        return np.full(steps, float(self.alpha))


@dataclass(frozen=True)
class TheoremDecay:
    gamma: float
    lambda_min: float
    alpha0: float

    def __post_init__(self):
        if self.gamma <= 0 or self.lambda_min <= 0 or self.alpha0 <= 0:
            raise InvalidGamma("gamma, lambda_min and alpha0 must be positive")
        if theorem_step_size(1, self.gamma, self.lambda_min) > self.alpha0 * (1 + 1e-12):
            raise InvalidGamma(
                f"gamma={self.gamma} gives alpha_1 > alpha0={self.alpha0}; "
                f"need gamma >= {2.0 / (self.alpha0 * self.lambda_min) - 1.0:.6g}"
            )

    @classmethod
    def for_problem(cls, p, alpha0=None):
        alpha0 = 1.0 / p.lambda_max if alpha0 is None else alpha0
        if alpha0 > 1.0 / p.lambda_max * (1 + 1e-12):
            raise InvalidGamma(f"alpha0={alpha0} exceeds 1/lambda_max={1.0 / p.lambda_max}")
        return cls(gamma_for(alpha0, p.lambda_min), p.lambda_min, alpha0)

    def __call__(self, k):
        return theorem_step_size(k, self.gamma, self.lambda_min)

    def alphas(self, steps):
        k = np.arange(1, steps + 1, dtype=np.float64)
        return 2.0 / ((k + self.gamma) * self.lambda_min)


def trace_ctac(C, p):
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (p.dim, p.dim):
        raise DimMismatch(f"C has shape {C.shape}, expected {(p.dim, p.dim)}")
    return float(np.trace(C.T @ p.A @ C))


def theorem_nu(p, C, theta0, gamma):
    return max(2.0 * trace_ctac(C, p) / p.lambda_min**2, gamma * loss(p, theta0))


def theorem_bound(p, C, theta0, gamma, k):
    """nu / (k + gamma), the bound on E[L(theta_k)].

    ``gamma`` must be admissible for some alpha0 <= 1/lambda_max, i.e.
    gamma >= 2 lambda_max / lambda_min - 1.
    """
    needed = 2.0 * p.lambda_max / p.lambda_min - 1.0
    if gamma <= 0 or gamma < needed * (1 - 1e-12):
        raise InvalidGamma(f"gamma={gamma} is below the admissible minimum {needed:.6g}")
    return theorem_nu(p, C, theta0, gamma) / (np.asarray(k, dtype=np.float64) + gamma)
