"""Seeded random streams.

Uniform draws come from numpy's PCG64 bit generator, whose output is
specified and identical across platforms. Normal draws are produced from
those uniforms with the Box-Muller transform, so the full sequence depends
only on the seed.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """Deterministic random stream keyed by an integer seed.

    ``fork(*keys)`` derives an independent child stream; the same
    ``(seed, keys)`` pair always yields the same child.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self._path = tuple(int(k) for k in _path)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self._path])))

    def fork(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self._path + tuple(keys))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def uniform_range(self, low, high, size=None) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def integers(self, low, high, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self._path})"
