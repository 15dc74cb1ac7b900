"""Seeded random source with a pinned, platform-independent algorithm.

All randomness in the package flows through `Rng`, which wraps numpy's
PCG64 generator (a published 64-bit generator with identical streams on
every platform). The platform default generators are never used.
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """Deterministic random source: identical seed, identical draws."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag: str) -> "Rng":
        """Derive an independent, reproducible stream for a named purpose."""
        digest = hashlib.sha256(f"{self.seed}:{tag}".encode("utf-8")).digest()
        return Rng(int.from_bytes(digest[:8], "little"))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(shape) * std

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=None) -> np.ndarray | float:
        out = self._gen.uniform(low, high, size=shape)
        return float(out) if shape is None else out

    def integers(self, low: int, high: int, shape=None):
        out = self._gen.integers(low, high, size=shape)
        return int(out) if shape is None else out

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = int(self._gen.integers(0, i + 1))
            items[i], items[j] = items[j], items[i]

    def choice(self, items: list):
        return items[int(self._gen.integers(0, len(items)))]
