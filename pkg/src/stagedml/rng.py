"""Deterministic pseudo-randomness shared by every component.

All stochastic behaviour (splits, bootstraps, parameter sampling,
synthetic data) flows through :class:`Rng`, a splitmix64 stream.
splitmix64 is a documented 64-bit generator with a published reference
implementation (Steele, Lea & Flood, "Fast splittable pseudorandom
number generators"), so a port in another language can reproduce the
exact same integer streams. Bounded draws use the multiply-shift
reduction ``(x * n) >> 64``, which is exact under Python's
arbitrary-precision integers.
"""

from __future__ import annotations

import hashlib
import math
from typing import MutableSequence, Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

T = TypeVar("T")


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from a sequence of labels.

    Uses blake2b over the stringified parts, so the fan-out of run seeds
    into stage/evaluation/split seeds is reproducible across processes
    and platforms (Python's builtin ``hash`` is salted and unusable here).
    """
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


class Rng:
    """splitmix64 stream plus the handful of derived draws the package needs."""

    __slots__ = ("_state", "_gauss_cache")

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64
        self._gauss_cache: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("empty integer range")
        return lo + self.randbelow(hi - lo + 1)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def log_uniform(self, lo: float, hi: float) -> float:
        """Uniform in log space over [lo, hi]; requires 0 < lo <= hi."""
        if lo <= 0 or hi < lo:
            raise ValueError("log_uniform needs 0 < lo <= hi")
        return math.exp(self.uniform(math.log(lo), math.log(hi)))

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.randbelow(len(seq))]

    def shuffle(self, xs: MutableSequence) -> None:
        """In-place Fisher-Yates shuffle (descending index variant)."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.randbelow(i + 1)
            xs[i], xs[j] = xs[j], xs[i]

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller transform; the paired deviate is cached."""
        if self._gauss_cache is not None:
            z, self._gauss_cache = self._gauss_cache, None
        else:
            u1 = self.random()
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(1.0 - u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._gauss_cache = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z
