"""Independent reference computations used by several test modules.

Each one takes a different route from the library code it checks:
time-stepping instead of closed forms, materialized matrices instead of
Gram tricks, quadrature instead of Gaussian formulas.
"""

import numpy as np


def random_pd(d, rng, lo=0.5, hi=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(lo, hi, d)) @ q.T


def rk4_riccati(A, C, alpha, t, steps=None):
    """Integrate dS/dt = -(A S + S A) + alpha C C^T from S(0) = 0 with classic RK4."""
    d = A.shape[0]
    if t == 0:
        return np.zeros((d, d))
    steps = steps or max(1000, int(np.ceil(t / 1e-3)))
    h = t / steps
    Q = alpha * C @ C.T

    def f(S):
        return Q - A @ S - S @ A

    S = np.zeros((d, d))
    for _ in range(steps):
        k1 = f(S)
        k2 = f(S + 0.5 * h * k1)
        k3 = f(S + 0.5 * h * k2)
        k4 = f(S + h * k3)
        S = S + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return S


def hellinger_sq_1d_quadrature(m1, s1, m2, s2, n=400001):
    """1 - integral sqrt(p q) for two 1-D normals (std s1, s2) by the trapezoid rule."""
    lo = min(m1 - 14 * s1, m2 - 14 * s2)
    hi = max(m1 + 14 * s1, m2 + 14 * s2)
    x = np.linspace(lo, hi, n)
    p = np.exp(-0.5 * ((x - m1) / s1) ** 2) / (s1 * np.sqrt(2 * np.pi))
    q = np.exp(-0.5 * ((x - m2) / s2) ** 2) / (s2 * np.sqrt(2 * np.pi))
    return 1.0 - np.trapezoid(np.sqrt(p * q), x)


def materialized_frobenius(G):
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    F = sum(np.outer(g, g) for g in G) / G.shape[0]
    return np.linalg.norm(F, "fro"), np.linalg.norm(np.diag(F))


def quadratic_loss_fn(A):
    A = np.asarray(A, dtype=np.float64)

    def fn(theta):
        return 0.5 * theta @ A @ theta, A @ theta

    return fn
