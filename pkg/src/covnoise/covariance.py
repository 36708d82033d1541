"""Noise covariance specifications for the perturbed update.

A spec describes the matrix C in ``theta <- theta - alpha grad + alpha C xi``
with ``xi ~ N(0, I)``. Every variant knows how to map a standard normal draw to
``C xi`` without necessarily forming C, and knows ``Tr(C^T C)`` in closed form.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, InvalidBatchSizes, NegativeEigenvalue, NegativeEntry, NotSymmetric
from .quadratic import SpectralDecomposition
from .rng import Rng

__all__ = [
    "BatchScale",
    "CovarianceSpec",
    "DiagonalSqrt",
    "Explicit",
    "Isotropic",
    "MatrixSqrt",
    "Rng",
    "TraceIsotropic",
    "Zero",
    "batch_scale_factor",
    "matrix_sqrt",
    "noise_second_moment",
    "sample_noise",
    "trace_isotropic_from_diag",
]

SYMMETRY_TOL = 1e-10
CLAMP_RTOL = 1e-10
NEGATIVE_RTOL = 1e-6


def matrix_sqrt(S):
    """Symmetric PSD square root via the eigendecomposition.

    Eigenvalues below ``1e-10 * ||S||_F`` are clamped to zero (rank-deficient
    Fisher estimates are the normal case); anything below ``-1e-6 * ||S||_F``
    is rejected.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise NotSymmetric("matrix is not symmetric")
    S = 0.5 * (S + S.T)
    norm = np.linalg.norm(S)
    if norm == 0.0:
        return np.zeros_like(S)
    spec = SpectralDecomposition.of(S)
    w = spec.eigenvalues
    if w[0] < -NEGATIVE_RTOL * norm:
        raise NegativeEigenvalue(f"eigenvalue {w[0]:.6g} is too negative for a PSD square root")
    w = np.where(w < CLAMP_RTOL * norm, 0.0, w)
    C = (spec.eigenvectors * np.sqrt(w)) @ spec.eigenvectors.T
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class BatchScale:
    m_large: int
    m_small: int

    def __post_init__(self):
        if not (int(self.m_small) >= 1 and int(self.m_large) >= int(self.m_small)):
            raise InvalidBatchSizes(f"need m_large >= m_small >= 1, got {self.m_large}, {self.m_small}")


def batch_scale_factor(bs):
    """sqrt((M_L - M_S) / (M_L M_S)): the std ratio between small- and large-batch gradient noise."""
    return math.sqrt((bs.m_large - bs.m_small) / (bs.m_large * bs.m_small))


class CovarianceSpec:
    """Base class; subclasses are frozen dataclasses."""

    dim: int

    def apply(self, xi):
        raise NotImplementedError

    def matrix(self):
        return self.apply(np.eye(self.dim))

    def second_moment(self):
        raise NotImplementedError

    @property
    def is_zero(self):
        return False


@dataclass(frozen=True)
class Zero(CovarianceSpec):
    dim: int

    def apply(self, xi):
        return np.zeros_like(np.asarray(xi, dtype=np.float64))

    def second_moment(self):
        return 0.0

    @property
    def is_zero(self):
        return True


@dataclass(frozen=True)
class Isotropic(CovarianceSpec):
    sigma: float
    dim: int

    def __post_init__(self):
        if self.sigma < 0:
            raise NegativeEntry("sigma must be nonnegative")

    def apply(self, xi):
        return self.sigma * np.asarray(xi, dtype=np.float64)

    def second_moment(self):
        return self.sigma**2 * self.dim


@dataclass(frozen=True, eq=False)
class MatrixSqrt(CovarianceSpec):
    """C = sqrt(S) for a symmetric PSD S."""

    S: np.ndarray
    C: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "C", matrix_sqrt(self.S))

    @property
    def dim(self):
        return self.C.shape[0]

    def apply(self, xi):
        return self.C @ np.asarray(xi, dtype=np.float64)

    def matrix(self):
        return self.C.copy()

    def second_moment(self):
        return float(np.trace(self.S))


@dataclass(frozen=True, eq=False)
class DiagonalSqrt(CovarianceSpec):
    """C = diag(sqrt(v))."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1:
            raise DimMismatch("v must be a vector")
        if np.any(v < 0):
            raise NegativeEntry("diagonal variances must be nonnegative")
        object.__setattr__(self, "v", v)

    @property
    def dim(self):
        return self.v.shape[0]

    def apply(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        s = np.sqrt(self.v)
        return s[:, None] * xi if xi.ndim == 2 else s * xi

    def second_moment(self):
        return float(np.sum(self.v))


@dataclass(frozen=True)
class TraceIsotropic(CovarianceSpec):
    """C = sqrt(trace / dim) I: isotropic noise carrying a given total variance."""

    trace: float
    dim: int

    def __post_init__(self):
        if self.trace < 0:
            raise NegativeEntry("trace must be nonnegative")

    @property
    def sigma(self):
        return math.sqrt(self.trace / self.dim)

    def apply(self, xi):
        return self.sigma * np.asarray(xi, dtype=np.float64)

    def second_moment(self):
        return float(self.trace)


@dataclass(frozen=True, eq=False)
class Explicit(CovarianceSpec):
    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise DimMismatch(f"C must be square, got shape {C.shape}")
        object.__setattr__(self, "C", C)

    @property
    def dim(self):
        return self.C.shape[0]

    def apply(self, xi):
        return self.C @ np.asarray(xi, dtype=np.float64)

    def matrix(self):
        return self.C.copy()

    def second_moment(self):
        return float(np.sum(self.C * self.C))


def sample_noise(spec, rng):
    """One draw of C xi. ``Zero`` returns zeros and leaves ``rng`` untouched."""
    if spec.is_zero:
        return np.zeros(spec.dim)
    return spec.apply(rng.normal(spec.dim))


def noise_second_moment(spec):
    """E||C xi||^2 = Tr(C^T C)."""
    return spec.second_moment()


def trace_isotropic_from_diag(diag_f):
    diag_f = np.asarray(diag_f, dtype=np.float64)
    if np.any(diag_f < 0):
        raise NegativeEntry("Fisher diagonal must be nonnegative")
    return TraceIsotropic(float(np.sum(diag_f)), diag_f.shape[0])
