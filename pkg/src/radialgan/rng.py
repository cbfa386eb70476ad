"""Seeded random streams.

Every random draw in the package goes through a ``numpy.random.Generator``
backed by PCG64, which is a fixed, platform-independent algorithm. Gaussian
variates are produced with the Box-Muller transform on top of the uniform
stream so the call order is explicit:

    m = ceil(n / 2)
    u1 = rng.random(m); u2 = rng.random(m)
    r = sqrt(-2 log(1 - u1))
    z = concat(r cos(2 pi u2), r sin(2 pi u2))[:n]
"""

from __future__ import annotations

import numpy as np

Rng = np.random.Generator


def make_rng(seed: int | Rng) -> Rng:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for a (seed, key, key, ...) path."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def normal(rng: Rng, size: int | tuple[int, ...]) -> np.ndarray:
    shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    u1 = rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n].reshape(shape)
