"""Deterministic RNG substreams for reproducible, parallel-safe experiments.

Every stochastic routine in this package draws from a ``numpy`` generator
built out of a :class:`numpy.random.SeedSequence`.  Substreams are keyed by
integer tuples (vertex index, repetition index, ...) so that results are
bit-reproducible regardless of scheduling order, and so that enlarging a
sweep never reshuffles the draws of earlier cells.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "child_sequence", "derive_seed", "key_part"]


def key_part(part) -> int:
    """Map a key component to a 32-bit unsigned integer.

    Integers must already be non-negative and below 2**32; strings are
    hashed with CRC-32 so that textual keys (scenario names, phase tags)
    stay stable across runs and platforms.
    """
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    value = int(part)
    if not 0 <= value < 2**32:
        raise ValueError(f"key part {part!r} outside uint32 range")
    return value


def child_sequence(seed, *key) -> np.random.SeedSequence:
    """Build the seed sequence for substream ``key`` of master ``seed``.

    ``seed`` may itself be a :class:`~numpy.random.SeedSequence`, in which
    case the key extends its spawn key (nested substreams).
    """
    parts = tuple(key_part(p) for p in key)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + parts
        )
    return np.random.SeedSequence(entropy=int(seed), spawn_key=parts)


def substream(seed, *key) -> np.random.Generator:
    """Return a fresh generator for substream ``key`` of master ``seed``."""
    return np.random.default_rng(child_sequence(seed, *key))


def derive_seed(seed, *key) -> int:
    """Collapse a substream key to a plain 64-bit integer seed."""
    state = child_sequence(seed, *key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])
