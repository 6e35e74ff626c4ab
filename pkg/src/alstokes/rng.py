"""xorshift64* generator.

Kept in-house so that a seed produces the same right-hand sides on any
platform and in any language: the state update and output map are a few
integer operations with no library-specific stream layout.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* with its 64-bit state seeded through one splitmix64 step."""

    name = "xorshift64*"

    def __init__(self, seed: int):
        self.seed = int(seed)
        s = _splitmix64(self.seed & _MASK)
        self.state = s if s else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * _MULT) & _MASK

    def random(self, size: int) -> np.ndarray:
        """Uniform doubles in [0, 1) from the top 53 bits."""
        out = np.empty(size)
        for i in range(size):
            out[i] = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return out

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        return low + (high - low) * self.random(size)
