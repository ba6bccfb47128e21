"""Deterministic random streams built on the splitmix64 mixer.

The integer stream is a pure function of (seed, draw index), computed with
64-bit wrapping arithmetic only, so the same seed yields the same stream on
every platform. Floating-point values are derived from the integers with
fixed formulas (53-bit uniforms, Box-Muller normals); within one numpy
environment they are bit-stable across runs and thread counts.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """Scalar splitmix64 finalizer (python ints, exact 64-bit wrap)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string, used to derive named child seeds."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class Rng:
    """Counter-based splitmix64 stream of uniforms and normals.

    Draw ``i`` (0-based) returns ``mix64(seed + (i+1) * GOLDEN)``, which is
    exactly the output of the sequential splitmix64 generator, so bulk
    generation is vectorizable without changing the stream.
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self._count = 0

    @property
    def seed(self) -> int:
        return self._seed

    def spawn(self, name: str) -> "Rng":
        """Independent child stream derived from this seed and a label."""
        return Rng(mix64(self._seed ^ fnv1a64(name)))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = np.uint64(self._seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def integers(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as uint64."""
        return self._raw(n)

    def uniform(self, shape, dtype=np.float32) -> np.ndarray:
        """Uniform samples in [0, 1): top 53 bits of each output scaled by 2^-53."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self._raw(n)
        u = (raw >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape).astype(dtype)

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        """Standard-normal samples via Box-Muller, scaled by ``std``.

        Each pair of raw draws yields two normals; one is dropped for odd
        element counts so consumption stays a deterministic function of the
        requested size.
        """
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        out = out[:n] * float(std)
        return out.reshape(shape).astype(dtype)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of one uniform draw each)."""
        keys = self._raw(int(n))
        return np.argsort(keys, kind="stable")

    def sample_indices(self, n: int, k: int) -> np.ndarray:
        """First ``k`` entries of a deterministic permutation of range(n), sorted."""
        if k >= n:
            return np.arange(n)
        return np.sort(self.permutation(n)[:k])


def _as_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)
