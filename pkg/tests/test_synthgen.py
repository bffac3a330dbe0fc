import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsebench.errors import ParameterError
from pulsebench.synthgen import SynthConfig, generate, synth_corpus

# Frozen outputs of the generator; any change to draw order or shapes shows up here.
GOLDEN_PEAKS_SEED0 = [11, 94, 178, 261, 344, 428, 511, 594, 678, 761, 844, 928]
GOLDEN_SUM_SEED0 = 84.22271002760161
GOLDEN_PEAKS_JITTER = [64, 138, 216, 290, 363, 438, 524, 597, 674, 744, 822, 900, 972]
GOLDEN_SUM_JITTER = 346.54117172556914


def test_golden_default():
    w, peaks = generate(SynthConfig(seed=0))
    assert peaks.tolist() == GOLDEN_PEAKS_SEED0
    assert float(w.samples.sum()) == pytest.approx(GOLDEN_SUM_SEED0, rel=1e-12)


def test_golden_jitter_noise_cosine():
    cfg = SynthConfig(seed=5, beat_rate_bpm=80, hrv_jitter_frac=0.05, morphology="raised_cosine", noise_sd=0.01)
    w, peaks = generate(cfg)
    assert peaks.tolist() == GOLDEN_PEAKS_JITTER
    assert float(w.samples.sum()) == pytest.approx(GOLDEN_SUM_JITTER, rel=1e-12)


def test_sixty_bpm_ten_seconds():
    w, peaks = generate(SynthConfig(beat_rate_bpm=60, seed=3))
    assert len(w) == 1000 and peaks.size == 10
    assert np.all(np.diff(peaks) == 100)


@given(st.sampled_from([60.0, 75.0, 100.0, 120.0]), st.sampled_from(["gauss_spike", "raised_cosine"]),
       st.integers(0, 2**32))
def test_zero_jitter_is_periodic(bpm, morph, seed):
    w, peaks = generate(SynthConfig(beat_rate_bpm=bpm, morphology=morph, seed=seed))
    period = int(round(6000 / bpm))
    x = w.samples
    assert np.max(np.abs(x[period:] - x[:-period])) < 1e-9


@given(st.integers(0, 2**40))
def test_same_seed_same_signal(seed):
    cfg = SynthConfig(hrv_jitter_frac=0.1, noise_sd=0.05, seed=seed)
    a, pa = generate(cfg)
    b, pb = generate(cfg)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(pa, pb)


def test_peaks_sit_on_local_maxima():
    w, peaks = generate(SynthConfig(beat_rate_bpm=90, hrv_jitter_frac=0.1, seed=2))
    for p in peaks:
        lo, hi = max(0, p - 3), min(len(w), p + 4)
        assert abs(int(np.argmax(w.samples[lo:hi])) + lo - p) <= 1


@pytest.mark.parametrize("kw", [dict(duration_s=0), dict(hrv_jitter_frac=0.5), dict(morphology="square"),
                                dict(noise_sd=-1), dict(duration_s=1.0, beat_rate_bpm=30)])
def test_invalid_configs(kw):
    with pytest.raises(ParameterError):
        SynthConfig(**kw)


def test_corpus_items_independent_of_n():
    a = synth_corpus(3, seed=9)
    b = synth_corpus(5, seed=9)
    for (wa, pa), (wb, pb) in zip(a, b):
        assert np.array_equal(wa.samples, wb.samples) and np.array_equal(pa, pb)
    assert [w.id for w, _ in a] == ["s00000", "s00001", "s00002"]
