"""Ornstein-Uhlenbeck moments and Hellinger distances between the induced Gaussians.

The continuous-time counterpart of constant-covariance perturbed GD on a
quadratic is ``d theta = -A theta dt + sqrt(alpha) C dW``. With the symmetric
eigendecomposition A = P D P^T its marginal at time t is Gaussian with

    mean(t) = P exp(-D t) P^T theta0
    cov(t)  = alpha P M(t) P^T,  M_ij = Q_ij (1 - exp(-(d_i + d_j) t)) / (d_i + d_j),

where Q = P^T C C^T P. Everything here is closed form.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, SingularCovariance
from .quadratic import QuadraticProblem, make_quadratic

REGULARIZATION = 1e-12


@dataclass(frozen=True, eq=False)
class OuSystem:
    A: np.ndarray
    C: np.ndarray
    alpha: float
    theta0: np.ndarray
    problem: QuadraticProblem = field(init=False, repr=False)

    def __post_init__(self):
        p = self.A if isinstance(self.A, QuadraticProblem) else make_quadratic(self.A)
        C = np.asarray(self.C, dtype=np.float64)
        theta0 = np.asarray(self.theta0, dtype=np.float64)
        if C.shape != (p.dim, p.dim) or theta0.shape != (p.dim,):
            raise DimMismatch("A, C and theta0 dimensions disagree")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "problem", p)
        object.__setattr__(self, "A", p.A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "theta0", theta0)

    @property
    def dim(self):
        return self.problem.dim

    def scaled(self, lam):
        """Same drift, diffusion C scaled by ``lam``."""
        return OuSystem(self.problem, lam * self.C, self.alpha, self.theta0)


@dataclass(frozen=True, eq=False)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimMismatch("covariance shape does not match the mean")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(cov), initial=0.0)):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))


def _one_minus_exp_over(s, t):
    # (1 - exp(-s t)) / s, with the s -> 0 limit t
    s = np.asarray(s, dtype=np.float64)
    x = s * t
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(x) > 1e-300, -np.expm1(-x) / np.where(s == 0, 1.0, s), t)
    return out


def ou_mean(sys, t):
    if t < 0:
        raise ValueError("t must be nonnegative")
    sp = sys.problem.spectrum
    P = sp.eigenvectors
    return P @ (np.exp(-sp.eigenvalues * t) * (P.T @ sys.theta0))


def _ou_covariance(sys, t):
    sp = sys.problem.spectrum
    P, w = sp.eigenvectors, sp.eigenvalues
    Q = P.T @ sys.C @ sys.C.T @ P
    M = Q * _one_minus_exp_over(w[:, None] + w[None, :], t)
    cov = sys.alpha * (P @ M @ P.T)
    return 0.5 * (cov + cov.T)


def ou_covariance(sys, t):
    if t < 0:
        raise ValueError("t must be nonnegative")
    return _ou_covariance(sys, t)


def ou_distribution(sys, t):
    return GaussianDist(ou_mean(sys, t), ou_covariance(sys, t))


def _regularized_eigs(cov):
    w = np.linalg.eigvalsh(cov + REGULARIZATION * np.eye(cov.shape[0]))
    if w[0] <= 0 or not np.all(np.isfinite(w)):
        raise SingularCovariance("covariance is not positive definite after regularization")
    return w


def gaussian_logdet(cov):
    return float(np.sum(np.log(_regularized_eigs(np.asarray(cov, dtype=np.float64)))))


def hellinger_sq(g1, g2):
    """Squared Hellinger distance between two Gaussians, in [0, 1].

    1 - det(S1)^(1/4) det(S2)^(1/4) / det(Sm)^(1/2) exp(-1/8 dm^T Sm^-1 dm)
    with Sm = (S1 + S2) / 2; determinants via log-eigenvalues, every covariance
    regularized by 1e-12 I.
    """
    if g1.mean.shape != g2.mean.shape:
        raise DimMismatch("Gaussians have different dimensions")
    d = g1.mean.shape[0]
    eye = REGULARIZATION * np.eye(d)
    ld1 = gaussian_logdet(g1.cov)
    ld2 = gaussian_logdet(g2.cov)
    sm = 0.5 * (g1.cov + g2.cov)
    ldm = gaussian_logdet(sm)
    dm = g1.mean - g2.mean
    quad = float(dm @ np.linalg.solve(sm + eye, dm))
    log_bc = 0.25 * ld1 + 0.25 * ld2 - 0.5 * ldm - 0.125 * quad
    return min(1.0, max(0.0, float(-np.expm1(min(log_bc, 0.0)))))


def scaled_hellinger(sys1, sys2, lam, t):
    """Hellinger^2 between the two OU marginals at time t with both diffusions scaled by ``lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g1 = GaussianDist(ou_mean(sys1, t), lam * lam * ou_covariance(sys1, t))
    g2 = GaussianDist(ou_mean(sys2, t), lam * lam * ou_covariance(sys2, t))
    return hellinger_sq(g1, g2)


def riccati_residual(sys, t, dt):
    """Frobenius norm of dSigma/dt + A Sigma + Sigma A - alpha C C^T with a central difference.

    The closed form is analytic in t, so Sigma(t - dt) is evaluated even when t < dt.
    """
    if t < 0 or not dt > 0:
        raise ValueError("need t >= 0 and dt > 0")
    A = sys.A
    S = _ou_covariance(sys, t)
    dS = (_ou_covariance(sys, t + dt) - _ou_covariance(sys, t - dt)) / (2.0 * dt)
    R = dS + A @ S + S @ A - sys.alpha * sys.C @ sys.C.T
    return float(np.linalg.norm(R))
