"""Counter-based random streams keyed by (seed, path index).

Each path owns a Philox stream with key ``seed + 2**64 * path``; the step
index is the position in that stream. Gaussian increments and bridge
uniforms come from counter-disjoint substreams of the same key, so the law
and the bits of a path never depend on how paths are scheduled.
"""
from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key(seed: int, path: int) -> int:
    if seed < 0 or path < 0:
        raise ValueError("seed and path index must be nonnegative")
    return (int(seed) & SEED_MASK) | (int(path) << 64)


def path_generator(seed: int, path: int, substream: int = 0) -> np.random.Generator:
    """Generator for one path; ``substream`` selects the top counter word."""
    bg = np.random.Philox(key=_key(seed, path), counter=[0, 0, 0, int(substream)])
    return np.random.Generator(bg)


def brownian_increments(seed: int, path: int, steps: int, dimension: int, dt: float) -> np.ndarray:
    """``(steps, dimension)`` Gaussian increments with variance ``dt``."""
    return path_generator(seed, path, 0).standard_normal((steps, dimension)) * np.sqrt(dt)


def bridge_uniforms(seed: int, path: int, steps: int, faces: int) -> np.ndarray:
    """``(steps, faces)`` uniforms on [0, 1) for the per-step bridge minima."""
    return path_generator(seed, path, 1).random((steps, faces))
