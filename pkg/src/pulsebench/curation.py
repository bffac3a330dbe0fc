"""Signal-quality screens for ECG and PPG records.

ECG records are screened on the Welch periodogram: a clean ECG shows a
comb of regularly spaced QRS harmonics reaching above 10 Hz. PPG records
are screened beat by beat against an ensemble-averaged template using a
DTW-aligned correlation.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks, welch

from .errors import FlatTemplateError, ParameterError, TooFewBeatsError
from .heartbeat_eval import detect_peaks_ecg, detect_peaks_ppg
from .signal_store import Waveform, normalize

log = logging.getLogger(__name__)


def resample_linear(x: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Plain linear-interpolation resampler (e.g. 125 Hz or 64 Hz to 100 Hz)."""
    x = np.asarray(x, dtype=np.float64)
    n_out = int(round(x.size * to_hz / from_hz))
    t_out = np.arange(n_out) / to_hz
    t_in = np.arange(x.size) / from_hz
    return np.interp(t_out, t_in, x)


# ---------------------------------------------------------------------------
# ECG periodogram screen


def welch_periodogram(w, segment_len: int = 2048, overlap_frac: float = 0.5,
                      window: str = "hann") -> tuple[np.ndarray, np.ndarray]:
    """One-sided power spectral density, density-scaled so that sum(P)*df ~ variance."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    fs = w.sample_rate_hz if isinstance(w, Waveform) else 100
    if segment_len > x.size:
        raise ParameterError(f"segment of {segment_len} samples is longer than the signal ({x.size})")
    if not 0.0 <= overlap_frac < 1.0:
        raise ParameterError("overlap_frac must lie in [0, 1)")
    noverlap = int(segment_len * overlap_frac)
    freqs, power = welch(x, fs=fs, window=window, nperseg=segment_len, noverlap=noverlap,
                         detrend=False, scaling="density")
    return freqs, power


@dataclass(frozen=True)
class EcgScreenConfig:
    segment_len: int = 2048
    overlap_frac: float = 0.5
    window: str = "hann"
    strict_min_dist_hz: float = 0.6
    relaxed_min_dist_hz: float = 0.3
    # only peaks within this many dB of the strongest one count
    dynamic_range_db: float = 40.0
    min_prominence_db: float = 6.0
    # and stand this far above the median of the dB spectrum
    min_over_median_db: float = 10.0
    min_peaks: int = 3
    spacing_cv_max: float = 0.15
    # strict peaks more irregular than this skip the relaxed pass
    rescue_cv_max: float = 0.5
    relaxed_extra_frac: float = 0.5
    far_hz: float = 0.6
    high_freq_hz: float = 10.0
    hr_range_bpm: tuple[float, float] = (30.0, 180.0)
    min_duration_s: float = 30.0


@dataclass(frozen=True)
class PeriodogramReport:
    freqs: np.ndarray
    power: np.ndarray
    strict_peaks: tuple[float, ...]
    relaxed_peaks: tuple[float, ...]
    spacing_cv: float
    has_peak_above_10hz: bool
    verdict: str
    hr_bpm: float = float("nan")
    reason: str = ""


def _spectral_peaks(freqs, power, min_dist_hz: float, cfg: EcgScreenConfig) -> np.ndarray:
    df = freqs[1] - freqs[0]
    db = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny))
    body = db[1:]  # skip DC
    floor = max(body.max() - cfg.dynamic_range_db, float(np.median(body)) + cfg.min_over_median_db)
    idx, _ = find_peaks(body, distance=max(1, int(round(min_dist_hz / df))),
                        height=floor, prominence=cfg.min_prominence_db)
    return freqs[idx + 1]


def _spacing_cv(peaks_hz: np.ndarray) -> float:
    if peaks_hz.size < 3:
        return float("inf")
    gaps = np.diff(peaks_hz)
    return float(np.std(gaps) / np.mean(gaps))


def ecg_quality_screen(w: Waveform, cfg: EcgScreenConfig = EcgScreenConfig()) -> PeriodogramReport:
    """Periodogram battery: strict pass, relaxed rescue pass, heart-rate check."""
    fs = w.sample_rate_hz
    if len(w) < cfg.min_duration_s * fs:
        raise ParameterError(f"ECG screen needs at least {cfg.min_duration_s} s of signal")
    seg = min(cfg.segment_len, len(w))
    freqs, power = welch_periodogram(w, seg, cfg.overlap_frac, cfg.window)
    strict = _spectral_peaks(freqs, power, cfg.strict_min_dist_hz, cfg)
    cv = _spacing_cv(strict)
    high = bool((strict > cfg.high_freq_hz).any())
    relaxed = np.array([])

    def report(verdict, hr=float("nan"), reason=""):
        return PeriodogramReport(freqs, power, tuple(map(float, strict)), tuple(map(float, relaxed)),
                                 cv, high, verdict, hr, reason)

    if strict.size < cfg.min_peaks:
        return report("rejected", reason="too few spectral peaks")
    if cv < cfg.spacing_cv_max and high:
        verdict = "clean"
    elif cv < cfg.rescue_cv_max:
        relaxed = _spectral_peaks(freqs, power, cfg.relaxed_min_dist_hz, cfg)
        new = np.array([f for f in relaxed if np.min(np.abs(strict - f)) > 1e-9])
        few = new.size <= cfg.relaxed_extra_frac * strict.size
        far = new.size > 0 and bool(np.all(np.min(np.abs(new[:, None] - strict[None, :]), axis=1) >= cfg.far_hz))
        if not (few or far):
            return report("rejected", reason="relaxed pass added too many nearby peaks")
        verdict = "rescued"
    else:
        return report("rejected", reason="spectral peaks irregularly spaced")

    peaks = detect_peaks_ecg(normalize(w)[0])
    if peaks.size < 2:
        return report("rejected", reason="no beats found in time domain")
    hr = 60.0 * fs / float(np.median(np.diff(peaks)))
    lo, hi = cfg.hr_range_bpm
    if not lo <= hr <= hi:
        return report("rejected", hr, reason="heart rate outside physiological range")
    return report(verdict, hr)


# ---------------------------------------------------------------------------
# PPG template / DTW screen


@dataclass(frozen=True)
class BeatTemplate:
    samples: np.ndarray
    beat_count_used: int


@dataclass(frozen=True)
class BeatQuality:
    per_beat: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def fraction_above(self, threshold: float = 0.5) -> float:
        return float(np.mean(self.per_beat > threshold)) if self.per_beat.size else 0.0


def beat_bounds_from_peaks(peaks: Sequence[int], T: int, tile: bool = False) -> list[tuple[int, int]]:
    """Beat boundaries at midpoints between successive peaks.

    The first and last beats extend half an adjacent interval outward,
    clipped to ``[0, T)``. With ``tile`` they are stretched to 0 and ``T``.
    """
    p = np.asarray(peaks, dtype=np.int64)
    if p.size < 2:
        raise TooFewBeatsError(f"need at least two peaks to bound beats, got {p.size}")
    mids = (p[:-1] + p[1:]) // 2
    first = 0 if tile else max(0, int(p[0] - (p[1] - p[0]) // 2))
    last = T if tile else min(T, int(p[-1] + (p[-1] - p[-2]) // 2))
    edges = [first, *map(int, mids), last]
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def segment_beats(w: Waveform, peaks: Sequence[int] | None = None, min_beats: int = 3) -> list[tuple[int, int]]:
    """Half-open beat bounds around detected (or supplied) pulse peaks."""
    if peaks is None:
        peaks = detect_peaks_ppg(normalize(w)[0])
    if len(peaks) < min_beats:
        raise TooFewBeatsError(f"found {len(peaks)} pulses, need {min_beats}")
    return beat_bounds_from_peaks(peaks, len(w))


def _resample_to(x: np.ndarray, n: int) -> np.ndarray:
    if x.size == n:
        return x.astype(np.float64)
    if x.size == 1:
        return np.full(n, float(x[0]))
    return np.interp(np.linspace(0, x.size - 1, n), np.arange(x.size), x)


def build_template(beats: Sequence[np.ndarray], min_beats: int = 3) -> BeatTemplate:
    """Ensemble average of beats resampled to the median beat length, peak-normalized."""
    if len(beats) < min_beats:
        raise TooFewBeatsError(f"need {min_beats} beats for a template, got {len(beats)}")
    length = int(round(float(np.median([len(b) for b in beats]))))
    stack = np.stack([_resample_to(np.asarray(b, dtype=np.float64), length) for b in beats])
    mean = stack.mean(axis=0)
    peak = np.max(np.abs(mean))
    if peak == 0 or np.ptp(mean) == 0:
        raise FlatTemplateError("ensemble average is flat")
    return BeatTemplate(mean / peak, len(beats))


def dtw_path(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
    """Optimal warping path under absolute-difference cost, unconstrained window."""
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row_prev = acc[i - 1]
        row = acc[i]
        diag_up = np.minimum(row_prev[:-1], row_prev[1:])
        c = cost[i - 1]
        for j in range(1, m + 1):
            best = diag_up[j - 1]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = c[j - 1] + best
    path = []
    i, j = n, m
    while i > 0 and j > 0:
        path.append((i - 1, j - 1))
        steps = (acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
        k = int(np.argmin(steps))
        if k == 0:
            i, j = i - 1, j - 1
        elif k == 1:
            i -= 1
        else:
            j -= 1
    path.reverse()
    return path


def _zscore(x: np.ndarray) -> np.ndarray | None:
    sd = x.std()
    return None if sd == 0 else (x - x.mean()) / sd


def align_to_template(beat: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Warp ``beat`` onto the template's time axis.

    Each template index receives the mean of the beat samples the DTW path
    maps onto it.
    """
    path = dtw_path(beat, template)
    sums = np.zeros(template.size)
    counts = np.zeros(template.size)
    for i, j in path:
        sums[j] += beat[i]
        counts[j] += 1
    return sums / counts


def dtw_quality(beat, template) -> float:
    """Clamped correlation between a DTW-aligned beat and the template, in [0, 1].

    Both inputs are z-scored first, so the score is invariant to positive
    affine changes of either one.
    """
    beat = np.asarray(beat, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    if beat.size == 0 or template.size == 0:
        raise ValueError("beat and template must be non-empty")
    zb, zt = _zscore(beat), _zscore(template)
    if zb is None or zt is None:
        warnings.warn("zero-variance beat or template; quality set to 0", stacklevel=2)
        return 0.0
    # Warping compensates timing, not polarity: a beat anti-correlated with the
    # template before warping scores 0 even if DTW could fold it into a match.
    unwarped = _resample_to(zb, zt.size)
    if float(np.dot(unwarped - unwarped.mean(), zt)) <= 0:
        return 0.0
    aligned = align_to_template(zb, zt)
    if aligned.std() == 0:
        return 0.0
    r = float(np.corrcoef(aligned, zt)[0, 1])
    return min(1.0, max(0.0, r))


@dataclass(frozen=True)
class PpgScreenConfig:
    quality_threshold: float = 0.5
    accept_fraction: float = 0.95


def accept_from_qualities(qualities: Sequence[float], cfg: PpgScreenConfig = PpgScreenConfig()) -> bool:
    q = np.asarray(qualities, dtype=np.float64)
    if q.size == 0:
        return False
    good = int(np.sum(q > cfg.quality_threshold))
    # integer comparison avoids 19/20 < 0.95 through float rounding
    return good * 100 >= round(cfg.accept_fraction * 100) * q.size


def ppg_accept(w: Waveform, cfg: PpgScreenConfig = PpgScreenConfig(),
               peaks: Sequence[int] | None = None) -> tuple[str, BeatQuality]:
    bounds = segment_beats(w, peaks)
    x = w.samples
    beats = [x[s:e] for s, e in bounds]
    template = build_template(beats)
    q = np.array([dtw_quality(b, template.samples) for b in beats])
    verdict = "accepted" if accept_from_qualities(q, cfg) else "rejected"
    return verdict, BeatQuality(q)


# ---------------------------------------------------------------------------
# Batch driver


def _screen_one(args):
    w, kind = args
    if kind == "ecg":
        try:
            rep = ecg_quality_screen(w)
        except ParameterError as exc:
            return {"id": w.id, "verdict": "rejected", "reason": str(exc)}
        return {"id": w.id, "verdict": rep.verdict, "spacing_cv": rep.spacing_cv,
                "n_strict_peaks": len(rep.strict_peaks), "hr_bpm": rep.hr_bpm, "reason": rep.reason}
    try:
        verdict, q = ppg_accept(w)
    except (TooFewBeatsError, FlatTemplateError) as exc:
        return {"id": w.id, "verdict": "rejected", "reason": str(exc)}
    return {"id": w.id, "verdict": verdict, "n_beats": int(q.per_beat.size),
            "frac_good": q.fraction_above(), "median_quality": float(np.median(q.per_beat)), "reason": ""}


def curate(waveforms: Sequence[Waveform], kind: str, workers: int = 1) -> list[dict]:
    """Screen each waveform; output rows keep input order regardless of ``workers``."""
    if kind not in ("ecg", "ppg"):
        raise ValueError("kind must be 'ecg' or 'ppg'")
    jobs = [(w, kind) for w in waveforms]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_screen_one, jobs))
    return [_screen_one(j) for j in jobs]
