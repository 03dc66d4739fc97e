"""
Seeded random streams.

Every consumer (generator noise, labels, positions, parameter init, dataset
synthesis) draws from its own named child stream, so adding draws in one place
never shifts the sequence seen by another.
"""
from __future__ import annotations

import zlib
from typing import Optional, Sequence, Tuple, Union

import numpy as np

Shape = Union[int, Tuple[int, ...], Sequence[int]]


class SeededRng:
    """PCG64 stream keyed by (seed, spawn path)."""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path)))

    def child(self, name: str) -> "SeededRng":
        """Independent stream derived from this one by name (stable across runs)."""
        return SeededRng(self.seed, self.path + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, shape: Shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        out = self._gen.standard_normal(shape, dtype=np.float64)
        return (out * std + mean).astype(np.float32)

    def uniform(self, low: float, high: float, shape: Shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape).astype(np.float32)

    def integers(self, low: int, high: int, shape: Optional[Shape] = None) -> np.ndarray:
        """Integer-uniform draws in [low, high)."""
        if high <= low:
            raise ValueError(f"integers: empty range [{low}, {high})")
        return self._gen.integers(low, high, size=shape, dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def state_dict(self) -> dict:
        return {"seed": self.seed, "path": list(self.path), "bit_generator": self._gen.bit_generator.state}

    def load_state_dict(self, state: dict) -> None:
        self.seed = int(state["seed"])
        self.path = tuple(state["path"])
        self._gen.bit_generator.state = state["bit_generator"]


def seeded_rng(seed: int) -> SeededRng:
    return SeededRng(seed)
