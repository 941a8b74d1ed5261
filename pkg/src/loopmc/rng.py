"""Seed plumbing and the portable generator shared by both kernel backends.

Every sampler in the package draws from xoshiro256** seeded through
splitmix64. The compiled kernels and the pure-Python fallback implement the
same recurrence, so a given 64-bit seed yields the same chain in either
backend.

Master seeds are split with :class:`numpy.random.SeedSequence`; each chain or
annealing stage receives its own child stream.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class KernelRNG:
    """Pure-Python xoshiro256** matching the compiled kernels bit for bit."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        st = int(seed) & MASK64
        st, self.s0 = splitmix64(st)
        st, self.s1 = splitmix64(st)
        st, self.s2 = splitmix64(st)
        st, self.s3 = splitmix64(st)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        """Uniform double in the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * _INV53

    def randint(self, k: int) -> int:
        """Integer in ``[0, k)`` from the high 32 bits (multiply-shift)."""
        return ((self.next_u64() >> 32) * k) >> 32


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def kernel_seed(seed) -> int:
    """Collapse an int / SeedSequence / None into one 64-bit kernel seed."""
    ss = as_seed_sequence(seed)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def spawn(seed, k: int) -> list[np.random.SeedSequence]:
    return as_seed_sequence(seed).spawn(k)


def seed_entropy(seed) -> int | None:
    """Best-effort integer record of a seed for reports."""
    ss = as_seed_sequence(seed)
    ent = ss.entropy
    if isinstance(ent, int):
        return ent
    return None
