"""Deterministic random-stream derivation.

Every source of randomness in the package flows from one master seed.
Substreams are derived statelessly from ``(seed, *path)`` via numpy's
``SeedSequence`` spawn keys, so any unit of work (a simulation run, a probe
evaluation, an iteration) owns an independent stream that does not depend on
execution order or worker count.
"""

from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence"


def as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def substream(seed, *path: int) -> np.random.SeedSequence:
    """Child sequence at ``path`` below ``seed``; stateless and repeatable."""
    base = as_seedseq(seed)
    return np.random.SeedSequence(
        entropy=base.entropy,
        spawn_key=tuple(base.spawn_key) + tuple(int(p) for p in path),
    )


def rng_from(seed, *path: int) -> np.random.Generator:
    return np.random.default_rng(substream(seed, *path))
