"""Heartbeat detection and imputation scoring.

Ground-truth beats come from running a detector on the clean signal and
predicted beats from running the same detector on the imputed signal.
Only beats that fall inside ablated regions are scored: a detection counts
as a true positive when a clean-signal beat lies within the tolerance
window centred on it.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.signal import find_peaks

from .errors import DimensionError, VacuousCaseError
from .rng import derive_seed, make_rng
from .signal_store import SAMPLE_RATE_HZ, AblationCase, Waveform, normalize

log = logging.getLogger(__name__)

TASKS = ("ecg_beats", "ppg_beats", "mse_only")


@dataclass(frozen=True)
class EcgDetectorConfig:
    refractory_ms: float = 200.0
    integration_ms: float = 150.0
    refine_ms: float = 100.0
    learn_s: float = 2.0
    searchback_rr_factor: float = 1.66


@dataclass(frozen=True)
class PpgDetectorConfig:
    refractory_ms: float = 300.0
    prominence_iqr_frac: float = 0.3
    # absolute floors assume unit-scale (min-max normalized) input
    min_prominence: float = 0.25
    min_height_above_median: float = 0.25


def _as_array(w) -> tuple[np.ndarray, int]:
    if isinstance(w, Waveform):
        return w.samples, w.sample_rate_hz
    return np.asarray(w, dtype=np.float64), SAMPLE_RATE_HZ


def _enforce_refractory(peaks: np.ndarray, score: np.ndarray, min_gap: int) -> np.ndarray:
    """Keep the stronger of any two peaks closer than ``min_gap`` samples."""
    kept: list[int] = []
    for p in peaks:
        if kept and p - kept[-1] < min_gap:
            if score[p] > score[kept[-1]]:
                kept[-1] = p
            continue
        kept.append(int(p))
    return np.asarray(kept, dtype=np.int64)


def detect_peaks_ecg(w, cfg: EcgDetectorConfig = EcgDetectorConfig()) -> np.ndarray:
    """R-peak detector: differencing, squaring, moving integration, adaptive threshold.

    Candidates are local maxima of the integrated energy. A candidate is a
    beat when it clears ``noise + 0.25 * (signal - noise)``, where both
    levels are running averages updated per candidate. After an RR gap
    longer than ``searchback_rr_factor`` times the mean RR, the strongest
    skipped candidate above half the threshold is recovered. Each beat is
    then moved to the largest absolute deviation from the signal median
    within ``refine_ms``.
    """
    x, fs = _as_array(w)
    n = x.size
    if n < 5:
        return np.zeros(0, dtype=np.int64)
    xp = np.pad(x, 2, mode="edge")
    deriv = (2 * xp[3:-1] + xp[4:] - xp[:-4] - 2 * xp[1:-3]) / 8.0
    energy = deriv**2
    win = max(1, int(round(cfg.integration_ms * fs / 1000)))
    mwi = np.convolve(energy, np.ones(win) / win, mode="same")
    top = float(mwi.max())
    # roundoff on flat input leaves energy near eps^2, not exactly 0
    if top <= (1e-9 * float(np.ptp(x))) ** 2 or np.ptp(x) == 0:
        return np.zeros(0, dtype=np.int64)
    refr = max(1, int(round(cfg.refractory_ms * fs / 1000)))
    cands, _ = find_peaks(mwi, distance=refr, height=top * 1e-6)
    if cands.size == 0:
        return np.zeros(0, dtype=np.int64)

    learn = cands[cands < cfg.learn_s * fs]
    heights = mwi[cands]
    spki = 0.5 * float(mwi[learn].max() if learn.size else heights.max())
    npki = 0.5 * float(np.mean(mwi[: int(cfg.learn_s * fs)]))
    thr = npki + 0.25 * (spki - npki)

    beats: list[int] = []
    skipped: list[int] = []
    rr: list[int] = []
    for c in cands:
        h = mwi[c]
        if h > thr:
            beats.append(int(c))
            spki = 0.125 * h + 0.875 * spki
            skipped = []
        else:
            npki = 0.125 * h + 0.875 * npki
            skipped.append(int(c))
        thr = npki + 0.25 * (spki - npki)
        if len(beats) >= 2 and beats[-1] == c:
            rr.append(beats[-1] - beats[-2])
        if rr and beats and skipped and c - beats[-1] > cfg.searchback_rr_factor * np.mean(rr[-8:]):
            pool = [s for s in skipped if s - beats[-1] >= refr and mwi[s] > 0.5 * thr]
            if pool:
                best = max(pool, key=lambda s: mwi[s])
                beats.append(best)
                spki = 0.25 * mwi[best] + 0.75 * spki
                skipped = [s for s in skipped if s > best]
                thr = npki + 0.25 * (spki - npki)
    if not beats:
        return np.zeros(0, dtype=np.int64)

    dev = np.abs(x - np.median(x))
    half = max(1, int(round(cfg.refine_ms * fs / 1000)))
    refined = []
    for b in sorted(beats):
        lo, hi = max(0, b - half), min(n, b + half + 1)
        refined.append(lo + int(np.argmax(dev[lo:hi])))
    refined = np.unique(np.asarray(refined, dtype=np.int64))
    return _enforce_refractory(refined, dev, refr)


def detect_peaks_ppg(w, cfg: PpgDetectorConfig = PpgDetectorConfig()) -> np.ndarray:
    """Neighbour-comparison peak finder with height and prominence floors."""
    x, fs = _as_array(w)
    if x.size < 3:
        return np.zeros(0, dtype=np.int64)
    q75, q25 = np.percentile(x, [75, 25])
    prom = max(cfg.prominence_iqr_frac * (q75 - q25), cfg.min_prominence)
    height = float(np.median(x)) + cfg.min_height_above_median
    distance = max(1, int(round(cfg.refractory_ms * fs / 1000)))
    peaks, _ = find_peaks(x, height=height, prominence=prom, distance=distance)
    return peaks.astype(np.int64)


DETECTORS: dict[str, Callable] = {"ecg_beats": detect_peaks_ecg, "ppg_beats": detect_peaks_ppg}


# ---------------------------------------------------------------------------
# Matching and metrics


def tolerance_samples(tol_ms: float = 50.0, rate_hz: int = SAMPLE_RATE_HZ) -> int:
    """Half-width of a centred window of ``tol_ms``, floored to whole samples."""
    return int(math.floor(tol_ms / 2.0 * rate_hz / 1000.0 + 1e-9))


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int], ...] = ()


def _components(truth: np.ndarray, det: np.ndarray, tol: int):
    """Connected components of the bipartite tolerance graph, as index lists."""
    events = sorted([(int(t), 0, i) for i, t in enumerate(truth)] + [(int(d), 1, j) for j, d in enumerate(det)])
    comp_t: list[int] = []
    comp_d: list[int] = []
    last_pos = None
    for pos, side, idx in events:
        if last_pos is not None and pos - last_pos > tol and (comp_t or comp_d):
            yield comp_t, comp_d
            comp_t, comp_d = [], []
        (comp_t if side == 0 else comp_d).append(idx)
        last_pos = pos
    if comp_t or comp_d:
        yield comp_t, comp_d


def match_peaks(truth, detected, tol_ms: float = 50.0, rate_hz: int = SAMPLE_RATE_HZ,
                tol_samples: int | None = None) -> MatchResult:
    """One-to-one tolerance matching with the largest possible number of pairs.

    A pair is allowed when ``|t - d| <= tol`` samples. Among maximum
    matchings the one with the smallest total offset is returned.
    """
    truth = np.asarray(truth, dtype=np.int64)
    det = np.asarray(detected, dtype=np.int64)
    tol = tolerance_samples(tol_ms, rate_hz) if tol_samples is None else int(tol_samples)
    pairs: list[tuple[int, int]] = []
    if truth.size and det.size:
        # events closer than tol chain into components; matching never crosses components
        for ti, di in _components(truth, det, tol):
            if not ti or not di:
                continue
            diff = np.abs(truth[ti][:, None] - det[di][None, :]).astype(np.float64)
            allowed = diff <= tol
            if not allowed.any():
                continue
            big = (tol + 1.0) * (len(ti) + len(di) + 1)
            cost = np.where(allowed, diff, big)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if allowed[r, c]:
                    pairs.append((int(truth[ti[r]]), int(det[di[c]])))
    pairs.sort()
    tp = len(pairs)
    return MatchResult(tp=tp, fp=int(det.size) - tp, fn=int(truth.size) - tp, pairs=tuple(pairs))


def _ratio(a: float, b: float) -> float:
    return a / b if b else float("nan")


def metrics(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """(precision, sensitivity, f1).

    Precision or sensitivity with a zero denominator is NaN, and F1 is NaN
    whenever either of them is. F1 is 0 when both are defined and zero.
    """
    precision = _ratio(tp, tp + fp)
    sensitivity = _ratio(tp, tp + fn)
    return precision, sensitivity, f1_score(precision, sensitivity)


def f1_score(precision: float, sensitivity: float) -> float:
    if math.isnan(precision) or math.isnan(sensitivity):
        return float("nan")
    if precision + sensitivity == 0:
        return 0.0
    return 2 * precision * sensitivity / (precision + sensitivity)


def mse_missing(case: AblationCase, imputed) -> float:
    y = _imputed_samples(imputed)
    gt = case.ground_truth.samples
    if y.shape != gt.shape:
        raise DimensionError(f"imputed length {y.shape} != ground truth length {gt.shape}")
    miss = case.missing
    if not miss.any():
        raise VacuousCaseError("no missing positions to score")
    return float(np.mean((y[miss] - gt[miss]) ** 2))


# ---------------------------------------------------------------------------
# Bootstrap


def bootstrap_ci(per_waveform_stats, aggregate: Callable[[np.ndarray], float] | None = None,
                 n_iter: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float, float]:
    """Percentile bootstrap over waveforms.

    ``per_waveform_stats`` has one row (or scalar) per waveform and
    ``aggregate`` maps a stack of rows to a scalar (default: mean). Resample
    ``i`` uses the generator seeded with ``derive_seed(seed, i)``.
    """
    stats = np.asarray(per_waveform_stats, dtype=np.float64)
    if stats.shape[0] < 1:
        raise ValueError("bootstrap needs at least one waveform")
    agg = aggregate or (lambda s: float(np.mean(s)))
    n = stats.shape[0]
    point = agg(stats)
    boots = np.empty(n_iter)
    for i in range(n_iter):
        idx = make_rng(derive_seed(seed, i)).integers(0, n, n)
        boots[i] = agg(stats[idx])
    alpha = (1.0 - level) / 2.0
    finite = boots[~np.isnan(boots)]
    if finite.size == 0:
        return point, float("nan"), float("nan")
    lo, hi = np.percentile(finite, [100 * alpha, 100 * (1 - alpha)])
    return float(point), float(lo), float(hi)


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class EvalReport:
    task: str
    method: str
    per_waveform: list[dict] = field(default_factory=list)
    aggregate: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "counts": dict(self.counts),
            "aggregate": {k: {"point": v[0], "ci_low": v[1], "ci_high": v[2]} for k, v in self.aggregate.items()},
            "per_waveform": list(self.per_waveform),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        def num(v):
            return float("nan") if v is None else float(v)

        agg = {k: (num(v["point"]), num(v["ci_low"]), num(v["ci_high"])) for k, v in d["aggregate"].items()}
        per = [{k: (float("nan") if v is None else v) for k, v in row.items()} for row in d["per_waveform"]]
        return cls(d["task"], d["method"], per, agg, dict(d.get("counts", {})))


def _imputed_samples(out) -> np.ndarray:
    if isinstance(out, Waveform):
        return out.samples
    imputed = getattr(out, "imputed", None)
    if imputed is not None:
        return imputed.samples
    return np.asarray(out, dtype=np.float64)


def score_case(case: AblationCase, imputed: np.ndarray, task: str, tol_ms: float = 50.0) -> dict:
    """Per-waveform stats: gap MSE and, for beat tasks, tp/fp/fn inside the gaps."""
    row = {"id": case.ground_truth.id, "mse_missing": mse_missing(case, imputed)}
    if task == "mse_only":
        return row
    detector = DETECTORS[task]
    fs = case.ground_truth.sample_rate_hz
    miss = case.missing
    truth = detector(case.ground_truth)
    det = detector(case.ground_truth.with_samples(imputed))
    truth = truth[miss[truth]] if truth.size else truth
    det = det[miss[det]] if det.size else det
    m = match_peaks(truth, det, tol_ms=tol_ms, rate_hz=fs)
    row.update(tp=m.tp, fp=m.fp, fn=m.fn)
    return row


def _score_one(args):
    case, imputer, task, tol_ms = args
    return score_case(case, _imputed_samples(imputer(case)), task, tol_ms)


def pooled_metrics(rows: np.ndarray) -> tuple[float, float, float]:
    tp, fp, fn = rows.sum(axis=0)
    return metrics(int(tp), int(fp), int(fn))


def evaluate_pipeline(cases: Sequence[AblationCase], imputer: Callable, task: str = "ecg_beats",
                      method: str | None = None, n_boot: int = 1000, level: float = 0.95, seed: int = 0,
                      tol_ms: float = 50.0, workers: int = 1) -> EvalReport:
    """Impute every case, score it, and aggregate with bootstrap CIs.

    MSE is averaged over waveforms; detection counts are pooled over
    waveforms before computing precision, sensitivity and F1.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    if not cases:
        raise ValueError("no cases to evaluate")
    jobs = [(c, imputer, task, tol_ms) for c in cases]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_score_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_score_one(j) for j in jobs]
    name = method or getattr(imputer, "__name__", type(imputer).__name__)
    return summarize(rows, task, name, n_boot=n_boot, level=level, seed=seed)


def summarize(rows: list[dict], task: str, method: str, n_boot: int = 1000, level: float = 0.95,
              seed: int = 0) -> EvalReport:
    rows = sorted(rows, key=lambda r: r["id"])
    mse = np.array([r["mse_missing"] for r in rows])
    aggregate = {"mse": bootstrap_ci(mse, n_iter=n_boot, level=level, seed=seed)}
    counts = {}
    if task != "mse_only":
        tpfpfn = np.array([[r["tp"], r["fp"], r["fn"]] for r in rows], dtype=np.float64)
        for k, name in enumerate(("precision", "sensitivity", "f1")):
            aggregate[name] = bootstrap_ci(tpfpfn, lambda s, k=k: pooled_metrics(s)[k],
                                           n_iter=n_boot, level=level, seed=seed)
        tot = tpfpfn.sum(axis=0).astype(int)
        counts = {"tp": int(tot[0]), "fp": int(tot[1]), "fn": int(tot[2])}
    counts["n_waveforms"] = len(rows)
    return EvalReport(task, method, rows, aggregate, counts)


def oracle_imputer(case: AblationCase) -> np.ndarray:
    """Returns the ground truth; scores a perfect reconstruction."""
    return case.ground_truth.samples


def normalized_case(case: AblationCase, method: str = "minmax") -> AblationCase:
    """Re-express a case on the normalized scale of its ground truth."""
    from .signal_store import apply_mask

    gt, _ = normalize(case.ground_truth, method)
    return apply_mask(gt, case.mask)
