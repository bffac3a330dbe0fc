import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsebench.errors import ConfigError, DimensionError, ParameterError
from pulsebench.missingness import (MissingnessSpec, block_samples, extended_count, extended_mask,
                                    extract_missingness_from_quality, make_mask, sample_extracted,
                                    transient_mask)
from pulsebench.rng import derive_seed, make_rng
from pulsebench.signal_store import MissingnessMask

GOLDEN_EXTENDED = ((1, 95), (0, 300), (1, 605))
GOLDEN_TRANSIENT = ((0, 10), (1, 5), (0, 5), (1, 5), (0, 5), (1, 5), (0, 15), (1, 20), (0, 10), (1, 5), (0, 15))


def test_golden_masks():
    assert extended_mask(1000, 0.3, 0).runs == GOLDEN_EXTENDED
    assert transient_mask(100, 0.3, 50, seed=0).runs == GOLDEN_TRANSIENT


def test_derive_seed_frozen():
    assert derive_seed(0, 1) == 5836529245451711556
    assert derive_seed(7, "x", 3) == 12884362290965581118
    assert derive_seed(0, 1) != derive_seed(0, 2)


def test_make_rng_is_philox():
    assert isinstance(make_rng(1).bit_generator, np.random.Philox)


@pytest.mark.parametrize("T,p,k", [(1000, 0.3, 300), (30, 0.1, 3), (10, 0.25, 3), (7, 0.0, 0), (7, 1.0, 7)])
def test_extended_count(T, p, k):
    assert extended_count(T, p) == k


@given(st.integers(1, 5000), st.floats(0.0, 1.0), st.integers(0, 2**63))
def test_extended_single_contiguous_gap(T, p, seed):
    m = extended_mask(T, p, seed)
    assert len(m) == T
    gaps = m.gap_lengths()
    k = extended_count(T, p)
    assert sum(gaps) == k
    assert len(gaps) == (1 if k else 0)


def test_extended_start_covers_whole_range():
    starts = {extended_mask(10, 0.5, s).runs[0][1] if extended_mask(10, 0.5, s).runs[0][0] == 1 else 0
              for s in range(400)}
    assert starts == set(range(6))


def test_transient_blocks_are_aligned():
    m = transient_mask(1003, 0.4, 50, seed=11)
    dense = m.to_dense()
    blocks = [dense[i:i + 5] for i in range(0, 1003, 5)]
    assert all(b.all() or (~b).all() for b in blocks)
    assert len(m) == 1003


def test_transient_fraction_binomial_ci():
    """10,000 seeds: realized fraction of dropped blocks inside a 99% binomial interval."""
    T, p, n_seeds = 100, 0.3, 10_000
    dropped = 0
    for s in range(n_seeds):
        dropped += transient_mask(T, p, seed=derive_seed(42, s)).missing_count // 5
    n = n_seeds * (T // 5)
    half = 2.5758 * math.sqrt(p * (1 - p) / n)
    assert abs(dropped / n - p) < half


def test_block_samples():
    assert block_samples(50) == 5
    with pytest.raises(ParameterError):
        block_samples(33)
    with pytest.raises(ParameterError):
        transient_mask(10, 1.5)


def test_extracted_crop_and_errors():
    lib = [MissingnessMask(((1, 3), (0, 4), (1, 3)))]
    assert sample_extracted(lib, 5, seed=0).runs == ((1, 3), (0, 2))
    with pytest.raises(ConfigError):
        sample_extracted([], 5, seed=0)
    with pytest.raises(DimensionError):
        sample_extracted(lib, 11, seed=0)
    off = {sample_extracted(lib, 4, seed=s, random_offset=True) for s in range(200)}
    assert len(off) > 1


def test_extract_from_quality():
    m = extract_missingness_from_quality([(0, 3), (3, 6), (6, 10)], [0.9, 0.2, 0.5], 10)
    assert m.runs == ((1, 3), (0, 3), (1, 4))
    with pytest.raises(ValueError):
        extract_missingness_from_quality([(0, 3), (4, 10)], [1, 1], 10)


def test_make_mask_dispatch():
    assert make_mask(MissingnessSpec("extended", 0.3, seed=0), 1000).runs == GOLDEN_EXTENDED
    pat = MissingnessMask(((0, 2), (1, 8)))
    assert make_mask(MissingnessSpec("extracted", pattern=pat), 5).runs == ((0, 2), (1, 3))


@given(st.integers(1, 500), st.floats(0, 1), st.integers(0, 2**32))
def test_generators_never_see_values(T, p, seed):
    # MCAR: masks depend only on (T, p, seed).
    assert extended_mask(T, p, seed) == extended_mask(T, p, seed)
    assert transient_mask(T, p, seed=seed) == transient_mask(T, p, seed=seed)
