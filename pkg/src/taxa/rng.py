"""Named, counter-based random streams.

Every random draw in the project comes from a stream identified by
(seed, name). Streams are backed by numpy's Philox counter-based bit
generator keyed with SHA-256(seed, name), so they are reproducible across
platforms and independent of each other and of call order. Deriving the
same (seed, name) twice always yields an identical stream, which is what
makes interrupted training resumable bit-exactly: call sites name their
streams by purpose and step (e.g. "train/s2/step417/eps") instead of
carrying mutable generator state around.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _philox_key(seed: int, name: str) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


def stream(seed: int, name: str) -> np.random.Generator:
    """A fresh generator for the (seed, name) stream, at position zero."""
    return np.random.Generator(np.random.Philox(key=_philox_key(seed, name)))


def normal(seed: int, name: str, shape, dtype=np.float64) -> np.ndarray:
    return stream(seed, name).standard_normal(shape).astype(dtype, copy=False)


def uniform(seed: int, name: str, shape=None) -> np.ndarray:
    return stream(seed, name).random(shape)


def integers(seed: int, name: str, low: int, high: int, shape=None) -> np.ndarray:
    """Uniform integers in [low, high)."""
    return stream(seed, name).integers(low, high, size=shape)
