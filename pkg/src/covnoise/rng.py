"""Seeded, counter-based random streams.

An ``Rng`` is a 64-bit seed plus a counter. Every draw reserves a contiguous
block of counter values and maps it through SplitMix64 (see ``_pykernels``),
so the seed -> stream map is fixed and the same on both kernel backends.
Consumption per call:

- ``uniform(n)`` / ``rademacher(n)`` / ``categorical`` (per row): 1 value each
- ``normal(n)``: 2 values each (Box-Muller, cosine branch only)
- ``permutation(n)``: n values
"""

import numpy as np

from . import _backend

_U64 = 1 << 64


class Rng:
    def __init__(self, seed, counter=0):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.key = int(_backend.kernels.stream_u64(seed, 0, 1)[0])
        self.counter = int(counter)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def reserve(self, n):
        """Advance the counter by ``n`` and return the block start."""
        start = self.counter
        self.counter += int(n)
        return start

    def uniform(self, n):
        return _backend.kernels.uniforms(self.key, self.reserve(n), n)

    def normal(self, n):
        start = self.reserve(2 * n)
        return _backend.kernels.normals(self.key, start, n)

    def rademacher(self, n):
        z = _backend.kernels.stream_u64(self.key, self.reserve(n), n)
        return 1.0 - 2.0 * (z >> np.uint64(63)).astype(np.float64)

    def categorical(self, probs):
        """One index per row of ``probs`` (rows need not be normalised)."""
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        cum = np.cumsum(probs, axis=1)
        u = self.uniform(probs.shape[0]) * cum[:, -1]
        idx = np.array([np.searchsorted(c, x, side="left") for c, x in zip(cum, u)], dtype=np.int64)
        return np.minimum(idx, probs.shape[1] - 1)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def sample_without_replacement(self, n, m):
        if not 0 <= m <= n:
            raise ValueError(f"cannot draw {m} of {n} without replacement")
        return self.permutation(n)[:m]
