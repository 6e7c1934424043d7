"""Deterministic seed derivation.

All randomness in the pipeline flows from one root seed. Each stage
(affine draws, weight init, k-means, fixtures) derives its own 64-bit
seed by hashing ``"<root>:<stage>:<index>"`` with BLAKE2b, so stages are
independently reproducible and adding a draw to one stage never shifts
another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stage_seed(root_seed: int, stage: str, index: int = 0) -> int:
    """Derive the 64-bit seed for `stage` (draw number `index`) from `root_seed`."""
    digest = hashlib.blake2b(
        f"{root_seed}:{stage}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def stage_rng(root_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """Generator seeded via :func:`stage_seed`."""
    return np.random.default_rng(stage_seed(root_seed, stage, index))
