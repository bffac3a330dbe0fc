"""Missingness models: extended loss, transient loss, extracted patterns.

All generators are MCAR: they never look at waveform values. Parallel
callers should seed item ``i`` with ``derive_seed(base_seed, i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ParameterError
from .rng import make_rng
from .signal_store import MISSING, PRESENT, SAMPLE_RATE_HZ, MissingnessMask

QUALITY_THRESHOLD = 0.5


def _check_fraction(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"missingness fraction must lie in [0, 1], got {p}")
    return p


def extended_count(T: int, p: float) -> int:
    """Number of samples removed by extended loss: ceil(p*T).

    A 1e-9 slack absorbs binary rounding so that e.g. p=0.1, T=30 gives 3.
    """
    return min(T, max(0, math.ceil(p * T - 1e-9)))


def extended_mask(T: int, p: float, seed: int) -> MissingnessMask:
    """One contiguous gap of ceil(p*T) samples at a uniformly random start."""
    p = _check_fraction(p)
    k = extended_count(T, p)
    if k == 0:
        return MissingnessMask.all_present(T)
    start = int(make_rng(seed).integers(0, T - k + 1))
    runs = [(PRESENT, start), (MISSING, k), (PRESENT, T - start - k)]
    return MissingnessMask(tuple(r for r in runs if r[1] > 0))


def block_samples(block_ms: float, rate_hz: int = SAMPLE_RATE_HZ) -> int:
    n = block_ms * rate_hz / 1000.0
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ParameterError(f"block of {block_ms} ms is not a whole positive number of samples at {rate_hz} Hz")
    return int(round(n))


def transient_mask(T: int, p: float, block_ms: float = 50.0, seed: int = 0,
                   rate_hz: int = SAMPLE_RATE_HZ) -> MissingnessMask:
    """Drop each disjoint block independently with probability ``p``.

    The trailing partial block is sampled like any other block.
    """
    p = _check_fraction(p)
    if T < 1:
        raise ParameterError("T must be at least 1")
    block = block_samples(block_ms, rate_hz)
    n_blocks = -(-T // block)
    dropped = make_rng(seed).random(n_blocks) < p
    present = np.repeat(~dropped, block)[:T]
    return MissingnessMask.from_dense(present)


def sample_extracted(patterns: Sequence[MissingnessMask], T: int, seed: int,
                     random_offset: bool = False) -> MissingnessMask:
    """Draw a library pattern uniformly and crop it to ``T`` samples.

    Cropping starts at index 0 unless ``random_offset`` is set, in which case
    the start is uniform over all offsets that fit.
    """
    if not patterns:
        raise ConfigError("missingness pattern library is empty")
    rng = make_rng(seed)
    pattern = patterns[int(rng.integers(0, len(patterns)))]
    if len(pattern) < T:
        raise DimensionError(f"pattern of length {len(pattern)} is shorter than T={T}")
    start = int(rng.integers(0, len(pattern) - T + 1)) if random_offset else 0
    return pattern.crop(start, T)


def extract_missingness_from_quality(beat_bounds: Sequence[tuple[int, int]], qualities: Sequence[float],
                                     T: int, threshold: float = QUALITY_THRESHOLD) -> MissingnessMask:
    """Mark beats with quality below ``threshold`` as missing.

    ``beat_bounds`` are half-open ``(start, end)`` pairs that must tile
    ``[0, T)`` exactly.
    """
    if len(beat_bounds) != len(qualities):
        raise DimensionError("one quality value per beat is required")
    if not beat_bounds:
        raise ValueError("no beats given")
    cursor = 0
    for s, e in beat_bounds:
        if s != cursor:
            kind = "overlap" if s < cursor else "gap"
            raise ValueError(f"beat bounds {kind} at sample {cursor}")
        if e <= s:
            raise ValueError(f"empty or reversed beat ({s}, {e})")
        cursor = e
    if cursor != T:
        raise ValueError(f"beat bounds end at {cursor}, expected {T}")
    runs = [(MISSING if q < threshold else PRESENT, e - s) for (s, e), q in zip(beat_bounds, qualities)]
    return MissingnessMask(tuple(runs))


@dataclass(frozen=True)
class MissingnessSpec:
    """Which missingness model to draw from, and with what seed.

    ``kind`` is ``"extended"``, ``"transient"`` or ``"extracted"``.
    """

    kind: str
    p: float = 0.3
    block_ms: float = 50.0
    seed: int = 0
    pattern: MissingnessMask | None = None
    random_offset: bool = False

    def __post_init__(self):
        if self.kind not in ("extended", "transient", "extracted"):
            raise ConfigError(f"unknown missingness kind {self.kind!r}")
        _check_fraction(self.p)
        if self.kind == "transient":
            block_samples(self.block_ms)
        if self.block_ms <= 0:
            raise ConfigError("block_ms must be positive")


def make_mask(spec: MissingnessSpec, T: int, library: Sequence[MissingnessMask] | None = None,
              seed: int | None = None) -> MissingnessMask:
    seed = spec.seed if seed is None else seed
    if spec.kind == "extended":
        return extended_mask(T, spec.p, seed)
    if spec.kind == "transient":
        return transient_mask(T, spec.p, spec.block_ms, seed)
    if spec.pattern is not None:
        library = [spec.pattern]
    return sample_extracted(library or [], T, seed, spec.random_offset)
