"""Seed plumbing: every random draw in the package flows from one integer."""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def tag(name: str) -> int:
    """Stable integer for a string label (crc32, independent of PYTHONHASHSEED)."""
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master: int, *path: int | str) -> int:
    """Deterministic child seed for ``master`` along ``path``.

    >>> derive_seed(42, 0, "srs") == derive_seed(42, 0, "srs")
    True
    """
    key = tuple(tag(p) if isinstance(p, str) else int(p) for p in path)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    words = ss.generate_state(2, dtype=np.uint32)
    return int(words[0]) << 32 | int(words[1])
