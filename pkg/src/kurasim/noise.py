"""Seeded Gaussian noise from a counter-based generator.

Uniforms come from numpy's Philox4x64 keyed directly by the 64-bit seed;
normals are produced by the Marsaglia polar method. The output sequence does
not depend on how draws are batched.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 4096


class NoiseStream:
    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._bitgen = np.random.Philox(key=self.seed, counter=0)
        self._buf = np.empty(0)
        self.draws = 0

    def _refill(self) -> None:
        raw = self._bitgen.random_raw(2 * _BLOCK)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 / 2.0**53) - 1.0
        u1, u2 = u[0::2], u[1::2]
        s = u1 * u1 + u2 * u2
        ok = (s > 0.0) & (s < 1.0)
        u1, u2, s = u1[ok], u2[ok], s[ok]
        f = np.sqrt(-2.0 * np.log(s) / s)
        pairs = np.empty(2 * len(s))
        pairs[0::2] = u1 * f
        pairs[1::2] = u2 * f
        self._buf = np.concatenate([self._buf, pairs])

    def normals(self, shape) -> np.ndarray:
        """Next ``prod(shape)`` standard normals in raster order."""
        n = int(np.prod(shape))
        while len(self._buf) < n:
            self._refill()
        out, self._buf = self._buf[:n], self._buf[n:]
        self.draws += n
        return out.reshape(shape)
