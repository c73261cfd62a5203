"""Deterministic pseudo-random streams.

Everything stochastic in this package (random sampling, the synthetic cost
landscape, measurement noise) draws from splitmix64 so that results are
bit-reproducible across runs and platforms. The generator, the float
conversion, the modulo bucketing, and the Box-Muller transform below are all
part of the reproducibility contract: do not change them without bumping
file-format versions.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """The splitmix64 generator (Steele, Lea & Flood's mixer)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1), 53 bits of entropy."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n). Pinned as ``next_u64() % n``."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def next_gauss(self) -> float:
        """Standard normal via Box-Muller; consumes exactly two draws."""
        # u1 in (0, 1] so log() is safe; u2 in [0, 1).
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def derived_seed(seed: int, tag: int) -> int:
    """Decorrelate substreams (e.g. model parameters vs. noise) of one seed."""
    return (seed ^ ((tag + 1) * _GOLDEN)) & _MASK64
