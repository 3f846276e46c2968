"""Deterministic, splittable random streams.

Every stream is a Philox4x64-10 counter-based generator keyed by a 64-bit
seed, so an identical seed plus an identical call sequence reproduces the
same values on every platform. Child streams derive their key from the
parent seed and a text label through splitmix64, which keeps independently
seeded subsystems (weight init, corpus sampling, batch order) decoupled:
drawing more values from one stream never shifts another.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _label_hash(label: object) -> int:
    # FNV-1a over the UTF-8 bytes of str(label)
    h = 0xCBF29CE484222325
    for byte in str(label).encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class RngState:
    """Splittable counter-based random stream (Philox keyed by a u64 seed)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def split(self, label: object) -> "RngState":
        """Derive an independent child stream; same (seed, label) -> same child."""
        return RngState(_splitmix64(self.seed ^ _label_hash(label)))

    def normal(self, shape, std: float = 1.0, mean: float = 0.0) -> np.ndarray:
        out = self._gen.normal(mean, std, size=shape)
        return out.astype(np.float32)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(np.float32)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high) as int64."""
        return self._gen.integers(low, high, size=size, dtype=np.int64)

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed:#018x})"
