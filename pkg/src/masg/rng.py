"""Seeded, splittable random streams.

Every stochastic run owns a private counter-based generator so that
(a) the same seed always reproduces the same draws, bit for bit, and
(b) independent runs can execute concurrently without sharing state.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent Philox generator for (seed, path).

    Distinct paths under the same seed give statistically independent
    streams; the Philox engine is counter-based, so draw sequences do
    not depend on platform threading or execution order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
