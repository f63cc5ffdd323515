"""Seeded random streams.

Every draw in the package goes through numpy's Philox4x64-10 bit generator,
which is counter-based and produces the same stream on every platform.
Gaussian variates come from Box-Muller on that stream rather than numpy's
ziggurat so the normal draws are pinned to a documented transform.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "philox4x64-10 (numpy.random.Philox) + box-muller normals"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(seed: int, *tags: int | str) -> int:
    """Child seed for a named sub-stream; stable across runs and platforms."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            words.extend(t.encode("utf-8"))
        else:
            words.append(int(t) & 0xFFFFFFFFFFFFFFFF)
    ss = np.random.SeedSequence(words)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def uniform(rng: np.random.Generator, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    return low + (high - low) * rng.random(size)


def normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws via the Box-Muller transform."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    pairs = (n + 1) // 2
    u1 = rng.random(pairs)
    u2 = rng.random(pairs)
    # random() lies in [0, 1); 1 - u1 lies in (0, 1] so the log is finite
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:n].reshape(shape)
