"""Deterministic, splittable random streams.

Every stochastic stage of a batch derives its own generator from a base seed
and a tag path, e.g. ``substream(seed, sim_id, "noise")``. Streams with
distinct tag paths are statistically independent, and the same path always
reproduces the same stream, so results do not depend on scheduling order or
on how many workers run concurrently.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tags: tuple) -> list[int]:
    digest = hashlib.sha256(repr(tags).encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 32, 8)]


def substream(base_seed: int, *tags) -> np.random.Generator:
    """Return a counter-based generator keyed by (base_seed, *tags).

    Tags may be ints or strings; they are hashed with SHA-256, so the mapping
    is stable across processes and platforms.
    """
    seed = int(base_seed)
    if seed < 0:
        raise ValueError("base_seed must be non-negative")
    seq = np.random.SeedSequence(entropy=[seed, *_tag_words(tags)])
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(base_seed: int, *tags) -> int:
    """Collapse (base_seed, *tags) to a plain integer seed for sub-components."""
    return int(substream(base_seed, *tags).integers(0, 2**63 - 1))
