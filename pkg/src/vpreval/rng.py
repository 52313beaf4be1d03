"""Deterministic pseudorandom streams.

A ``Stream`` is a xoshiro256** generator whose state is derived from a
master seed and a purpose string via splitmix64.  Independent purposes
("place/3", "noise/db", ...) give independent streams, so consuming one
never shifts another: regenerating any part of a dataset from the same
seed reproduces identical bits.

Gaussians use the polar method with a pinned consumption order (see
``_kernels_py.fill_gauss``); no library RNG is involved anywhere.
"""

from __future__ import annotations

import numpy as np

from vpreval import kernels

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """Scramble step of splitmix64 applied to x."""
    z = x & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def derive_state(seed: int, purpose: str = "") -> np.ndarray:
    """xoshiro256** state for (seed, purpose): four splitmix64 outputs."""
    x = (seed & _M64) ^ kernels.fnv1a64(purpose.encode("utf-8"))
    out = []
    for _ in range(4):
        x = (x + _GOLDEN) & _M64
        out.append(splitmix64(x))
    if not any(out):
        out[0] = _GOLDEN
    return np.array(out, dtype=np.uint64)


class Stream:
    """A named deterministic random stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int, purpose: str = ""):
        self.state = derive_state(seed, purpose)

    def next_u64(self) -> int:
        """One raw 64-bit draw (xoshiro256**)."""
        s = [int(v) for v in self.state]
        r = (_rotl((s[1] * 5) & _M64, 7) * 9) & _M64
        t = (s[1] << 17) & _M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        self.state[:] = np.array(s, dtype=np.uint64)
        return r

    def uniforms(self, count: int) -> np.ndarray:
        out = np.empty(count)
        kernels.fill_uniform(self.state, out)
        return out

    def gaussians(self, count: int) -> np.ndarray:
        out = np.empty(count)
        kernels.fill_gauss(self.state, out)
        return out

    def unit_vector(self, dim: int) -> np.ndarray:
        """Gaussian direction normalized to unit length."""
        v = self.gaussians(dim)
        norm = float(np.sqrt(np.dot(v, v)))
        if norm == 0.0:
            v[0] = 1.0
            return v
        return v / norm


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64
