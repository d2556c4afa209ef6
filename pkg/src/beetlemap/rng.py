"""Deterministic random-stream derivation.

Every stochastic stage of the pipeline draws from its own generator,
derived from a single user-facing seed plus a stable sequence of tags
(stage name, epoch, sample index, ...).  Streams are therefore
reproducible and independent of execution order: adding draws to one
stage never shifts the numbers seen by another.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "derive_seed"]


def _entropy(seed: int, parts: tuple[int | str, ...]) -> list[int]:
    """Map a seed and a tag tuple to a SeedSequence entropy list.

    String tags are hashed with crc32, which is stable across processes
    (unlike the builtin ``hash``).
    """
    words = [int(seed) & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        else:
            words.append(int(part) & 0xFFFFFFFF)
    return words


def substream(seed: int, *parts: int | str) -> np.random.Generator:
    """Return a Generator for the stream identified by ``(seed, *parts)``."""
    return np.random.default_rng(np.random.SeedSequence(_entropy(seed, parts)))


def derive_seed(seed: int, *parts: int | str) -> int:
    """Collapse ``(seed, *parts)`` to a plain integer seed for APIs that want one."""
    state = np.random.SeedSequence(_entropy(seed, parts)).generate_state(2)
    return int(state[0]) ^ (int(state[1]) << 32)
