"""Seeded 64-bit PRNG streams.

SplitMix64 is used instead of :mod:`random` so that traces are bit-identical
across Python versions and platforms.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence, TypeVar

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")

# one independent stream per purpose; changing the number of steps never
# shifts draws between purposes
PURPOSES = {"init": 1, "start": 2, "action": 3, "explore": 4, "successor": 5}


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit natural, got {seed}")
        self.state = seed

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return _mix(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def integer(self, lo: int, hi: int) -> int:
        return lo + self.below(hi - lo + 1)

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]

    def weighted_index(self, weights: Sequence[int]) -> int:
        """Index drawn with probability proportional to integer ``weights``."""
        x = self.below(sum(weights))
        for i, w in enumerate(weights):
            if x < w:
                return i
            x -= w
        raise AssertionError("unreachable")

    def bernoulli(self, p: Fraction) -> bool:
        """True with probability ``p``, compared exactly on a 53-bit draw."""
        num, den = p.numerator, p.denominator
        if num <= 0:
            return False
        if num >= den:
            return True
        return (self.next_u64() >> 11) * den < num << 53


def stream(seed: int, purpose: str) -> SplitMix64:
    """Independent generator for one purpose derived from the master seed."""
    tag = PURPOSES[purpose]
    return SplitMix64(_mix((seed + tag * GOLDEN) & MASK64))


def parse_probability(text: str) -> Fraction:
    """Parse a decimal string such as ``"0.1"`` into an exact fraction in [0, 1]."""
    try:
        p = Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a decimal probability: {text!r}") from exc
    if not 0 <= p <= 1:
        raise ValueError(f"probability must lie in [0, 1], got {text!r}")
    return p
