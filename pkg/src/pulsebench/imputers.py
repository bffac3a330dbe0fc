"""Non-learned imputation baselines: mean fill, linear interpolation, FFT.

Every imputer takes an :class:`AblationCase` and returns an
:class:`ImputerOutput` whose observed samples are copied through unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError
from .signal_store import AblationCase, Waveform


@dataclass(frozen=True)
class ImputerOutput:
    imputed: Waveform
    observed: np.ndarray  # True where the value came from the input
    converged: bool = True
    n_iters: int = 0

    @property
    def samples(self) -> np.ndarray:
        return self.imputed.samples


def _observed(case: AblationCase) -> tuple[np.ndarray, np.ndarray]:
    present = case.present
    if not present.any():
        raise InsufficientDataError(f"waveform {case.ground_truth.id!r} has no observed samples")
    return case.ablated.samples, present


def _wrap(case: AblationCase, values: np.ndarray, present: np.ndarray, **kw) -> ImputerOutput:
    out = np.where(present, case.ablated.samples, values)
    return ImputerOutput(case.ablated.with_samples(out), present.copy(), **kw)


def mean_fill(case: AblationCase) -> ImputerOutput:
    x, present = _observed(case)
    return _wrap(case, np.full(x.size, x[present].mean()), present)


def linear_interp(case: AblationCase) -> ImputerOutput:
    """Bridge interior gaps linearly; hold the nearest observed value at the ends."""
    x, present = _observed(case)
    idx = np.arange(x.size)
    return _wrap(case, np.interp(idx, idx[present], x[present]), present)


def _topk_project(spec: np.ndarray, k: int) -> np.ndarray:
    if k >= spec.size:
        return spec
    keep = np.argpartition(np.abs(spec), spec.size - k)[spec.size - k:]
    out = np.zeros_like(spec)
    out[keep] = spec[keep]
    return out


def fft_impute(case: AblationCase, k_harmonics: int = 32, n_iters: int = 100, tol: float = 1e-6) -> ImputerOutput:
    """Iterative spectral projection onto the ``k_harmonics`` strongest frequencies.

    Starting from a mean fill, each iteration keeps the ``k_harmonics``
    largest real-FFT bins (each bin stands for a conjugate pair, so the
    kept set is conjugate-symmetric), inverts, and overwrites only the
    missing samples. Stops once the largest change at a missing sample drops
    below ``tol``. The returned output carries ``converged=False`` when the
    iteration budget runs out first.
    """
    x, present = _observed(case)
    if x.size < 2 * k_harmonics:
        raise ParameterError(f"length {x.size} too short for {k_harmonics} harmonics")
    miss = ~present
    y = np.where(present, x, x[present].mean())
    converged = False
    it = 0
    for it in range(1, n_iters + 1):
        rec = np.fft.irfft(_topk_project(np.fft.rfft(y), k_harmonics), n=y.size)
        delta = np.max(np.abs(rec[miss] - y[miss])) if miss.any() else 0.0
        y[miss] = rec[miss]
        if delta < tol:
            converged = True
            break
    return _wrap(case, y, present, converged=converged, n_iters=it)


IMPUTERS = {"mean": mean_fill, "linear": linear_interp, "fft": fft_impute}
