"""Seeded random streams.

Every stochastic routine takes an explicit integer seed and builds a
Philox4x64 counter-based generator from it. Work fanned out over many
items derives one seed per item with :func:`derive_seed`, so results do
not depend on worker count or scheduling.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = 2**64 - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


def _word(p: int | str) -> int:
    if isinstance(p, str):
        return zlib.crc32(p.encode("utf-8"))
    return int(p) & _MASK64


def derive_seed(base_seed: int, *path: int | str) -> int:
    """Child seed for item ``path`` under ``base_seed``.

    Defined as the first 64-bit word of ``SeedSequence([base_seed, *path])``;
    string path components enter as their CRC-32.
    """
    entropy = [int(base_seed) & _MASK64, *(_word(p) for p in path)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
