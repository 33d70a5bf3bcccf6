"""Portable seeded generator.

SplitMix64 (Steele, Lea & Flood 2014) is used wherever a draw affects a
reported number, so that graphs and initial parameters can be regenerated
bit-for-bit in any language:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

all arithmetic modulo 2**64. ``uniform()`` maps the top 53 bits to [0, 1).
"""
from __future__ import annotations

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53


def derive_seed(*parts: int) -> int:
    """Mix several integers into one 64-bit seed (order sensitive)."""
    state = 0
    for p in parts:
        state = SplitMix64(state ^ (int(p) & _MASK)).next_u64()
    return state
