"""Named, seedable random streams.

Every stochastic component asks for its own stream by label, so adding a
new consumer never shifts the draws seen by an existing one.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, label: str) -> np.random.Generator:
    """Return a PCG64 generator determined by ``(seed, label)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *_label_words(label)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def child_seed(seed: int, label: str) -> int:
    """Derive a 63-bit integer seed for a sub-task."""
    return int(stream(seed, "seed:" + label).integers(0, 2**63 - 1))
