"""Pure numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function. The Cython build is preferred
at import time (see ``_backend``); this module is the fallback and the
reference the compiled kernels are tested against.

Random stream: value ``i`` of the stream with key ``key`` is the SplitMix64
finaliser applied to ``key + (i + 1) * GOLDEN`` (mod 2**64), i.e. the i-th
output of a SplitMix64 generator started at state ``key``. Uniforms map a
value ``z`` to ``((z >> 11) + 1) * 2**-53`` in (0, 1]. Normal ``j`` drawn at
counter ``c`` uses the uniforms at ``c + 2j`` and ``c + 2j + 1`` through the
cosine branch of Box-Muller.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53
TWO_PI = 6.283185307179586

BACKEND_NAME = "python"


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _counters(start, n):
    return np.uint64(start) + np.arange(n, dtype=np.uint64)


def stream_u64(key, start, n):
    idx = _counters(start, n) + np.uint64(1)
    return mix64(np.uint64(key) + idx * GOLDEN)


def _to_unit(z):
    return ((z >> _S11).astype(np.float64) + 1.0) * _INV53


def uniforms(key, start, n):
    return _to_unit(stream_u64(key, start, n))


def normals(key, start, n):
    u = uniforms(key, start, 2 * n)
    return np.sqrt(-2.0 * np.log(u[0::2])) * np.cos(TWO_PI * u[1::2])


def _normals_many(keys, counters):
    # keys: (S,), counters: (m,) -> (S, m) normals, each using counters c and c + 1
    c = counters.astype(np.uint64) + np.uint64(1)
    k = keys.astype(np.uint64)[:, None]
    u1 = _to_unit(mix64(k + c[None, :] * GOLDEN))
    u2 = _to_unit(mix64(k + (c[None, :] + np.uint64(1)) * GOLDEN))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


def _matvec_rows(X, M):
    # rows of X @ M.T, summed over columns in index order so that the result for
    # a row never depends on how many rows are processed together
    out = X[:, :1] * M[:, 0]
    for j in range(1, M.shape[1]):
        out = out + X[:, j : j + 1] * M[:, j]
    return out


def quadratic_pgd(A, C, theta0, alphas, keys, start, log_steps, record_params, div_limit):
    """Run ``theta_k = theta_{k-1} - a_k A theta_{k-1} + a_k C xi_k`` for all keys at once.

    ``C is None`` means no noise and no randomness consumed. Returns
    ``(loss, grad_norm, noise_norm, params, div_step, div_row)`` where the first
    three are (S, len(log_steps)) and ``div_row`` holds (loss, grad_norm,
    noise_norm) at ``div_step`` for diverged seeds (div_step == -1 otherwise).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    th = np.array(theta0, dtype=np.float64, copy=True)
    S, d = th.shape
    K = alphas.shape[0]
    nlog = log_steps.shape[0]
    loss_out = np.full((S, nlog), np.nan)
    gn_out = np.full((S, nlog), np.nan)
    nn_out = np.full((S, nlog), np.nan)
    params = np.full((S, nlog, d), np.nan) if record_params else None
    div_step = np.full(S, -1, dtype=np.int64)
    div_row = np.full((S, 3), np.nan)
    alive = np.ones(S, dtype=bool)
    coord = np.arange(d, dtype=np.uint64)

    g = _matvec_rows(th, A)
    loss = 0.5 * np.sum(th * g, axis=1)
    nn = np.zeros(S)
    ptr = 0
    for k in range(K + 1):
        if k > 0:
            a = alphas[k - 1]
            step = a * g
            if C is not None:
                ctr = np.uint64(start) + np.uint64(2) * (np.uint64((k - 1) * d) + coord)
                xi = _normals_many(keys, ctr)
                eps = a * _matvec_rows(xi, C)
                nn = np.sqrt(np.sum(eps * eps, axis=1))
                new = th - step + eps
            else:
                new = th - step
            th = np.where(alive[:, None], new, th)
            g = _matvec_rows(th, A)
            loss = 0.5 * np.sum(th * g, axis=1)
        bad = alive & ~(np.isfinite(loss) & (loss <= div_limit))
        if bad.any():
            gn = np.sqrt(np.sum(g * g, axis=1))
            div_step[bad] = k
            div_row[bad, 0] = loss[bad]
            div_row[bad, 1] = gn[bad]
            div_row[bad, 2] = nn[bad]
            alive &= ~bad
        if ptr < nlog and log_steps[ptr] == k:
            gn = np.sqrt(np.sum(g * g, axis=1))
            loss_out[alive, ptr] = loss[alive]
            gn_out[alive, ptr] = gn[alive]
            nn_out[alive, ptr] = nn[alive]
            if record_params:
                params[alive, ptr, :] = th[alive]
            ptr += 1
        if not alive.any():
            break
    return loss_out, gn_out, nn_out, params, div_step, div_row
