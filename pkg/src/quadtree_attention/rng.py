"""Deterministic pseudo-random numbers for tests, initializers and toy tasks.

The generator is splitmix64: a 64-bit counter advanced by the golden-ratio
increment, with two xor-multiply finalization rounds per output. It is tiny,
has no global state, and the exact bit stream is pinned by this file, so any
seed reproduces identical tensors on every platform.

Independent streams are derived by xoring the seed with
golden_ratio * stream_id (mod 2**64) -- disjoint streams do not share outputs
for practical purposes.
"""

import math

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    """splitmix64 stream with uniform/normal helpers.

    normal() uses Box-Muller and caches the second variate, so draws come in
    deterministic pairs regardless of how they are grouped into arrays.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._state = self.seed
        self._spare_normal = None

    def next_u64(self):
        """Advance the counter and return the next 64-bit output."""
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * self.next_float()

    def normal(self, mean=0.0, std=1.0):
        """Standard Box-Muller; u1 is shifted into (0, 1] so log never sees 0."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
        else:
            u1 = ((self.next_u64() >> 11) + 1) * 2.0 ** -53
            u2 = self.next_float()
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return mean + std * z

    def uniform_array(self, shape, lo=0.0, hi=1.0, dtype=np.float64):
        """Row-major array of uniforms; fill order is part of the contract."""
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.uniform(lo, hi)
        return out.reshape(shape).astype(dtype)

    def normal_array(self, shape, mean=0.0, std=1.0, dtype=np.float64):
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.normal(mean, std)
        return out.reshape(shape).astype(dtype)

    def permutation(self, n):
        """Fisher-Yates permutation of range(n) driven by this stream."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def split(self, stream_id):
        """Independent child stream keyed off the construction seed."""
        return derive_stream(self.seed, stream_id)


def derive_stream(seed, stream_id):
    """Child generator for (seed, stream_id) without building the parent."""
    return SplitMix64((int(seed) ^ ((_GOLDEN * int(stream_id)) & _MASK64)) & _MASK64)
