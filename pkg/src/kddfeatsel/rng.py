"""Seed derivation.

One global seed fans out into named substreams. A substream's identity is
the hash of its name parts, so adding or reordering consumers elsewhere
never shifts the draws another consumer sees.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed, *parts) -> list[int]:
    """Entropy key for numpy's SeedSequence: [seed..., h(part), ...].

    seed may be an int or an already-derived key (list or tuple of ints),
    so substreams can be derived from substreams.
    """
    if isinstance(seed, (list, tuple)):
        key = [int(x) & 0xFFFFFFFF for x in seed]
    else:
        key = [int(seed) & 0xFFFFFFFF]
    for part in parts:
        digest = hashlib.sha256(str(part).encode("utf-8")).digest()
        key.append(int.from_bytes(digest[:4], "big"))
    return key


def substream(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *parts))
