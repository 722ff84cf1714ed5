"""Deterministic hashing primitives shared across the package.

Everything here is defined bit-exactly so that featurization, seeded
initialization, and mock LLM outputs are reproducible across platforms
and processes (no reliance on Python's randomized ``hash``).
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of ``data``."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def fnv1a64_text(text: str) -> int:
    return fnv1a64(text.encode("utf-8"))


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class SplitMix64Stream:
    """Stream of uniform floats from a splitmix64 generator.

    The initial state folds ``seed`` and any number of integer ``keys``
    through the mixer, so (seed, key) pairs index independent streams.
    """

    def __init__(self, seed: int, *keys: int):
        state = seed & _MASK64
        _, state = splitmix64(state)
        for key in keys:
            state = (state ^ (key & _MASK64)) & _MASK64
            _, state = splitmix64(state)
        self._state = state

    def next_uint64(self) -> int:
        self._state, out = splitmix64(self._state)
        return out

    def next_float(self) -> float:
        # 53 significant bits -> uniform on [0, 1)
        return (self.next_uint64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = low + (high - low) * self.next_float()
        return out
