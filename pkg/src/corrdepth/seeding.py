"""Deterministic pseudo-random streams via SplitMix64.

Everything seeded in this package flows through these helpers rather than
numpy's RNG so that frozen test fixtures survive numpy upgrades.  Constants
are the standard SplitMix64 ones (Steele et al.); outputs are pure integer
functions of (seed, index) and therefore identical on every platform.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF


def splitmix64(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of SplitMix64 seeded with ``seed``."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *tags: int) -> int:
    """Stable child seed from a parent seed and integer tags."""
    x = seed & _MASK
    for t in tags:
        x = int(splitmix64(x ^ (t & _MASK), 1)[0])
    return x


def uniform(seed: int, shape: tuple[int, ...], low: float, high: float) -> np.ndarray:
    """Uniform floats in [low, high), float64, from the seeded stream."""
    n = int(np.prod(shape)) if shape else 1
    u = (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return (low + (high - low) * u).reshape(shape)


def normal(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal floats via Box-Muller on the seeded stream."""
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    u = (splitmix64(seed, 2 * m) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    u1 = np.clip(u[:m], 2.0 ** -53, None)
    u2 = u[m:]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.concatenate([r * np.cos(2.0 * np.pi * u2),
                          r * np.sin(2.0 * np.pi * u2)])[:n]
    return out.reshape(shape)
