"""Deterministic random-stream derivation.

All randomness in a run is expanded from a single integer seed via named,
counter-based substreams: ``substream(seed, "audio", 17)`` always yields the
same generator regardless of how many other streams were drawn before it.
This makes every command a pure function of (inputs, config, seed) and lets
independent components (audio windows, tracking episodes) be computed in any
order, or in parallel, without changing results.

The derivation hashes the key parts into a ``spawn_key`` for numpy's
``SeedSequence``; streams with different keys are statistically independent.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream"]


def _key_part(part: int | str) -> int:
    if isinstance(part, bool):  # bool is an int subclass; reject to avoid surprises
        raise ValueError("substream key parts must be int or str, not bool")
    if isinstance(part, int):
        if part < 0:
            raise ValueError("integer key parts must be non-negative")
        return part
    digest = hashlib.sha256(part.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, *key: int | str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``.

    Key parts may be strings (component names) or non-negative integers
    (counters, window indices).  The same (seed, key) pair always produces
    a bit-identical stream.
    """
    spawn_key = tuple(_key_part(p) for p in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)))
