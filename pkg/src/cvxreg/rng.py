"""SplitMix64 pseudo-random numbers, reproducible in any language.

The generator keeps a 64-bit state ``s``. Each draw adds
``0x9E3779B97F4A7C15`` to ``s`` (mod 2**64) and returns the mix::

    z = s
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

Seed 0 yields 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F.

Derived quantities:

* uniform on [0, 1): ``(z >> 11) * 2**-53``
* normal: Box-Muller on consecutive uniform pairs (u1, u2),
  ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)`` then the matching ``sin`` term
* shuffle: Fisher-Yates from the last position down, swapping ``i`` with
  ``floor(u * (i + 1))``
* child streams: ``derive(seed, a, b, ...)`` folds each key in by seeding a
  fresh generator with ``state + GOLDEN * (key + 1)`` and taking its first output
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive(seed: int, *keys: int) -> int:
    """A 64-bit seed for the sub-stream identified by ``keys``."""
    s = int(seed) & _MASK
    for key in keys:
        s = SplitMix64((s + GOLDEN * (int(key) + 1)) & _MASK).next_u64()
    return s


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def u64(self, size: int) -> np.ndarray:
        steps = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN)
            out = _mix(z)
        self.state = (self.state + size * GOLDEN) & _MASK
        return out

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else size
        m = int(np.prod(shape))
        u = (self.u64(m) >> np.uint64(11)).astype(float) * 2.0 ** -53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(shape)

    def normal(self, size, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        m = int(np.prod(shape))
        u = self.uniform(2 * ((m + 1) // 2))
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.empty(u.size)
        z[0::2] = r * np.cos(2 * np.pi * u2)
        z[1::2] = r * np.sin(2 * np.pi * u2)
        return loc + scale * z[:m].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for t, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[t] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
