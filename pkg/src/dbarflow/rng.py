"""Portable seeded random numbers.

The generator is SplitMix64, spelled out here so the exact stream can be
reproduced in any language:

    state += 0x9E3779B97F4A7C15                 (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB    (mod 2**64)
    return z ^ (z >> 31)

Uniform doubles in [0, 1) use the top 53 bits: ``(z >> 11) * 2**-53``.
Normals use Box-Muller on two consecutive uniforms ``u1, u2`` and return
``sqrt(-2 log(1 - u1)) * cos(2 pi u2)`` (one normal per pair, no caching).
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, size=None):
        if size is None:
            return (self.next_u64() >> 11) * 2.0 ** -53
        n = int(np.prod(size))
        out = np.array([(self.next_u64() >> 11) * 2.0 ** -53 for _ in range(n)])
        return out.reshape(size)

    def normal(self, size=None):
        def one():
            u1 = (self.next_u64() >> 11) * 2.0 ** -53
            u2 = (self.next_u64() >> 11) * 2.0 ** -53
            return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

        if size is None:
            return one()
        n = int(np.prod(size))
        return np.array([one() for _ in range(n)]).reshape(size)
