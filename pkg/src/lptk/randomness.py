"""Seeded random number generation with a pinned algorithm identity.

Uniforms come from PCG64 and normals from the Marsaglia polar transform
applied to those uniforms, so every draw is a pure function of the 64-bit
seed. The ``RNG_ALGORITHM`` string is embedded in dataset files and report
headers so a stream can always be re-identified.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RNG_ALGORITHM", "SeededRng"]

RNG_ALGORITHM = "pcg64-polar-v1"


class SeededRng:
    """Deterministic generator: PCG64 uniforms, polar-method normals."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._bits = np.random.Generator(np.random.PCG64(self.seed))
        self._spare: list[float] = []

    def uniform(self, size: int) -> np.ndarray:
        return self._bits.random(size)

    def normal(self, size: int) -> np.ndarray:
        """size i.i.d. standard normals via the polar (Marsaglia) method."""
        out = np.empty(size)
        filled = 0
        if self._spare and size:
            take = min(len(self._spare), size)
            out[:take] = self._spare[:take]
            del self._spare[:take]
            filled = take
        while filled < size:
            m = max(64, int(1.4 * (size - filled)) // 2 + 1)
            u = 2.0 * self._bits.random(m) - 1.0
            v = 2.0 * self._bits.random(m) - 1.0
            s = u * u + v * v
            ok = (s > 0.0) & (s < 1.0)
            u, v, s = u[ok], v[ok], s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            pair = np.empty(2 * s.size)
            pair[0::2] = u * f
            pair[1::2] = v * f
            take = min(pair.size, size - filled)
            out[filled : filled + take] = pair[:take]
            self._spare.extend(pair[take:])
            filled += take
        return out

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), by partial Fisher-Yates."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct indices from {n}")
        pool = np.arange(n)
        u = self.uniform(k)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            pool[i], pool[j] = pool[j], pool[i]
        return np.sort(pool[:k].copy())
