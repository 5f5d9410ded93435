"""Deterministic 64-bit RNG used everywhere platform-independent draws matter.

splitmix64 is tiny, has a single u64 of state, and produces the same stream on
every platform, which keeps replays and dataset generation bit-exact.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance one splitmix64 step. Returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z = z ^ (z >> 31)
    return state, z


def mix(*parts: int) -> int:
    """Fold several integers into one u64 seed, order-sensitive."""
    state = 0x8000000000000000
    for p in parts:
        state, out = splitmix64((state ^ (p & MASK64)) & MASK64)
        state ^= out
    return state & MASK64


class Rng:
    """Stateful splitmix64 stream with a few convenience draws."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state, out = splitmix64(self.state)
        return out

    def below(self, n: int) -> int:
        """Uniform integer in [0, n). Rejection-free modulo is fine here:
        n is always tiny relative to 2**64 so the bias is < 2**-50."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % n

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def chance(self, p: float) -> bool:
        return self.uniform() < p

    def choice(self, seq):
        return seq[self.below(len(seq))]
