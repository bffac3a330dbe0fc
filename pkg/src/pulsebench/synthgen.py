"""Deterministic quasiperiodic test signals with known beat locations.

All randomness comes from a Philox4x64 counter-based generator
(``numpy.random.Philox``) keyed by ``SynthConfig.seed``. Draw order is
fixed: first-beat phase, then one period jitter per beat, then the
additive noise vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rng import make_rng
from .signal_store import SAMPLE_RATE_HZ, Waveform

MORPHOLOGIES = ("gauss_spike", "raised_cosine")

# gauss_spike shape, seconds
SPIKE_SIGMA_S = 0.020
SECONDARY_SIGMA_S = 0.040
SECONDARY_AMP = 0.2
SECONDARY_DELAY_S = 0.200

# raised_cosine half-width as a fraction of the nominal period
PULSE_HALF_WIDTH_FRAC = 0.35


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 10.0
    rate_hz: int = SAMPLE_RATE_HZ
    beat_rate_bpm: float = 72.0
    hrv_jitter_frac: float = 0.0
    morphology: str = "gauss_spike"
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0 or self.beat_rate_bpm <= 0 or self.rate_hz <= 0:
            raise ParameterError("duration, rate and beat rate must be positive")
        if not 0.0 <= self.hrv_jitter_frac <= 0.3:
            raise ParameterError("hrv_jitter_frac must lie in [0, 0.3]")
        if self.morphology not in MORPHOLOGIES:
            raise ParameterError(f"morphology must be one of {MORPHOLOGIES}")
        if self.noise_sd < 0:
            raise ParameterError("noise_sd must be non-negative")
        if self.n_samples < 2 * self.period_samples:
            raise ParameterError("signal must span at least two nominal periods")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    @property
    def period_samples(self) -> float:
        return 60.0 * self.rate_hz / self.beat_rate_bpm


def _beat_times(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    period = cfg.period_samples
    t0 = float(rng.integers(0, max(1, int(period))))
    # lead-in beats before t=0 so that trailing pulse tails are present at the start
    lead = int(np.ceil(_support(cfg)[1] / (period * (1 - 3 * cfg.hrv_jitter_frac)))) + 1
    n_max = int(np.ceil(cfg.n_samples / (period * (1 - 3 * cfg.hrv_jitter_frac)))) + lead + 3
    if cfg.hrv_jitter_frac > 0:
        eps = np.clip(rng.standard_normal(n_max), -3.0, 3.0) * cfg.hrv_jitter_frac
    else:
        eps = np.zeros(n_max)
    periods = period * (1.0 + eps)
    rel = np.concatenate(([0.0], np.cumsum(periods[1:])))
    times = t0 + rel - rel[lead]
    return times[times < cfg.n_samples + period]


def _beat_shape(cfg: SynthConfig, offsets: np.ndarray) -> np.ndarray:
    """Pulse value at ``offsets`` samples from the beat centre."""
    fs = cfg.rate_hz
    if cfg.morphology == "gauss_spike":
        s1, s2 = SPIKE_SIGMA_S * fs, SECONDARY_SIGMA_S * fs
        d2 = SECONDARY_DELAY_S * fs
        return np.exp(-0.5 * (offsets / s1) ** 2) + SECONDARY_AMP * np.exp(-0.5 * ((offsets - d2) / s2) ** 2)
    h = PULSE_HALF_WIDTH_FRAC * cfg.period_samples
    out = 0.5 * (1.0 + np.cos(np.pi * offsets / h))
    out[np.abs(offsets) >= h] = 0.0
    return out


def _support(cfg: SynthConfig) -> tuple[float, float]:
    fs = cfg.rate_hz
    if cfg.morphology == "gauss_spike":
        return -8 * SPIKE_SIGMA_S * fs, SECONDARY_DELAY_S * fs + 8 * SECONDARY_SIGMA_S * fs
    h = PULSE_HALF_WIDTH_FRAC * cfg.period_samples
    return -h, h


def generate(cfg: SynthConfig) -> tuple[Waveform, np.ndarray]:
    """Synthesize a waveform and return it with the true beat-peak indices."""
    rng = make_rng(cfg.seed)
    T = cfg.n_samples
    times = _beat_times(cfg, rng)
    x = np.zeros(T)
    lo, hi = _support(cfg)
    for c in times:
        a = max(0, int(np.floor(c + lo)))
        b = min(T, int(np.ceil(c + hi)) + 1)
        if b <= a:
            continue
        idx = np.arange(a, b)
        x[a:b] += _beat_shape(cfg, idx - c)
    if cfg.noise_sd > 0:
        x += rng.standard_normal(T) * cfg.noise_sd
    peaks = np.round(times).astype(np.int64)
    peaks = peaks[(peaks >= 0) & (peaks < T)]
    return Waveform(x, cfg.rate_hz, f"synth-{cfg.morphology}-{cfg.seed}"), peaks


def synth_corpus(n: int, seed: int = 0, duration_s: float = 10.0, bpm_range: tuple[float, float] = (50.0, 100.0),
                 hrv_jitter_frac: float = 0.0, morphologies: tuple[str, ...] = MORPHOLOGIES,
                 noise_sd: float = 0.0, prefix: str = "s") -> list[tuple[Waveform, np.ndarray]]:
    """``n`` signals with beat rates uniform over ``bpm_range``, cycling morphologies.

    Item ``i`` depends only on ``(seed, i)``.
    """
    from .rng import derive_seed

    lo, hi = bpm_range
    if not 0 < lo <= hi:
        raise ParameterError("bpm_range must be positive and ordered")
    out = []
    for i in range(n):
        s = derive_seed(seed, i)
        bpm = float(make_rng(derive_seed(s, "bpm")).uniform(lo, hi)) if hi > lo else float(lo)
        cfg = SynthConfig(duration_s=duration_s, beat_rate_bpm=bpm, hrv_jitter_frac=hrv_jitter_frac,
                          morphology=morphologies[i % len(morphologies)], noise_sd=noise_sd, seed=s)
        w, peaks = generate(cfg)
        out.append((Waveform(w.samples, w.sample_rate_hz, f"{prefix}{i:05d}"), peaks))
    return out
