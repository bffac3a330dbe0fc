"""Desk-scale experiments on synthetic pulsative signals.

Two directional checks shared by ``scripts/`` and the acceptance tests:

* :func:`imputer_ordering`: FFT reconstruction against mean fill and linear
  interpolation on 30% extended gaps.
* :func:`toy_training`: a small attention imputer with bottleneck-dilated
  query/key functions against a parameter-matched vanilla one.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .heartbeat_eval import evaluate_pipeline, mse_missing
from .imputers import fft_impute, linear_interp, mean_fill
from .missingness import MissingnessSpec, make_mask
from .rng import derive_seed, make_rng
from .signal_store import AblationCase, MissingnessMask, apply_mask
from .synthgen import synth_corpus

log = logging.getLogger(__name__)


def masked_corpus(n: int, seed: int, duration_s: float, p: float = 0.3, kind: str = "extended",
                  bpm_range: tuple[float, float] = (50.0, 100.0), prefix: str = "s") -> list[AblationCase]:
    """Zero-jitter synthetic signals (alternating morphologies), each with its own mask."""
    spec = MissingnessSpec(kind, p=p)
    out = []
    for i, (w, _) in enumerate(synth_corpus(n, seed, duration_s, bpm_range, prefix=prefix)):
        out.append(apply_mask(w, make_mask(spec, len(w), seed=derive_seed(seed, "mask", i))))
    return out


# ---------------------------------------------------------------------------
# Classical imputer ordering


@dataclass
class OrderingResult:
    mse: dict[str, np.ndarray]  # per-case gap MSE by method
    f1: dict[str, float]  # pooled downstream F1 by method
    wins: int  # cases where fft beats both linear and mean
    n: int
    seconds: float


def imputer_ordering(n: int = 100, duration_s: float = 30.0, p: float = 0.3, seed: int = 0,
                     n_boot: int = 200, workers: int = 1) -> OrderingResult:
    t0 = time.perf_counter()
    cases = masked_corpus(n, seed, duration_s, p)
    methods = {"mean": mean_fill, "linear": linear_interp, "fft": fft_impute}
    mse = {k: np.array([mse_missing(c, f(c)) for c in cases]) for k, f in methods.items()}
    wins = int(np.sum((mse["fft"] < mse["linear"]) & (mse["fft"] < mse["mean"])))
    f1 = {}
    for k in ("mean", "fft"):
        rep = evaluate_pipeline(cases, methods[k], "ecg_beats", method=k, n_boot=n_boot,
                                seed=derive_seed(seed, "boot"), workers=workers)
        f1[k] = rep.aggregate["f1"][0]
    return OrderingResult(mse, f1, wins, n, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Toy training


@dataclass(frozen=True)
class ToyConfig:
    n_train: int = 200
    n_val: int = 100
    duration_s: float = 10.0  # T = 1000 at 100 Hz
    p: float = 0.3
    d: int = 16  # BDC width; the vanilla width is chosen to match its parameter count
    steps: int = 2000
    batch_size: int = 2
    lr: float = 1e-3
    seeds: tuple[int, ...] = (0, 1, 2)
    data_seed: int = 1
    n_period_cases: int = 100


@dataclass
class ToyRun:
    kind: str
    seed: int
    d: int
    n_params: int
    val_mse: float
    per_case: np.ndarray
    loss_trace: list[float]
    seconds: float


@dataclass
class ToyResult:
    config: ToyConfig
    mean_fill_mse: float
    runs: list[ToyRun] = field(default_factory=list)
    period_wins: float = float("nan")  # fraction of one-period gaps where BDC beats mean fill

    def median(self, kind: str) -> float:
        return float(np.median([r.val_mse for r in self.runs if r.kind == kind]))

    @property
    def seconds(self) -> float:
        return float(sum(r.seconds for r in self.runs))


def _gap_mse(cases, imputer) -> np.ndarray:
    return np.array([mse_missing(c, imputer(c)) for c in cases])


def one_period_cases(n: int, seed: int, duration_s: float) -> list[AblationCase]:
    """Signals with a single gap exactly one nominal beat period long."""
    out = []
    for i, (w, peaks) in enumerate(synth_corpus(n, seed, duration_s, prefix="p")):
        r = make_rng(derive_seed(seed, "gap", i))
        g = int(round(float(np.median(np.diff(peaks)))))
        start = int(r.integers(0, len(w) - g + 1))
        present = np.ones(len(w), dtype=bool)
        present[start:start + g] = False
        out.append(apply_mask(w, MissingnessMask.from_dense(present)))
    return out


def toy_training(cfg: ToyConfig = ToyConfig(), kinds: tuple[str, ...] = ("bdc", "vanilla")) -> ToyResult:
    import torch

    from .bdc import AttentionStackConfig, OptimizerConfig, TransformerImputer, matched_triple, param_count, train

    torch.set_num_threads(1)
    train_cases = masked_corpus(cfg.n_train, cfg.data_seed, cfg.duration_s, cfg.p, prefix="t")
    val_cases = masked_corpus(cfg.n_val, derive_seed(cfg.data_seed, "val"), cfg.duration_s, cfg.p, prefix="v")
    mf = _gap_mse(val_cases, mean_fill)
    result = ToyResult(cfg, float(mf.mean()))
    models = matched_triple(AttentionStackConfig(d=cfg.d, d_x=cfg.d))
    spec = MissingnessSpec("extended", p=cfg.p)
    opt = OptimizerConfig(lr=cfg.lr, batch_size=cfg.batch_size)
    period = one_period_cases(cfg.n_period_cases, derive_seed(cfg.data_seed, "period"), cfg.duration_s)
    for seed in cfg.seeds:
        for kind in kinds:
            mcfg = models[kind]
            t0 = time.perf_counter()
            res = train(mcfg, train_cases, opt, steps=cfg.steps, seed=seed, mask_spec=spec, log_every=0)
            imp = TransformerImputer(mcfg, res.params, name=kind)
            per_case = _gap_mse(val_cases, imp)
            run = ToyRun(kind, seed, mcfg.d, param_count(mcfg), float(per_case.mean()), per_case,
                         res.loss_trace, time.perf_counter() - t0)
            result.runs.append(run)
            log.info("%s seed %d: val gap MSE %.4f (mean fill %.4f) in %.0f s", kind, seed, run.val_mse,
                     result.mean_fill_mse, run.seconds)
            if kind == "bdc" and seed == cfg.seeds[0] and period:
                wins = _gap_mse(period, imp) < _gap_mse(period, mean_fill)
                result.period_wins = float(wins.mean())
    return result


def quick_toy() -> ToyConfig:
    """A few-minute variant for smoke runs."""
    return replace(ToyConfig(), n_train=40, n_val=20, steps=200, seeds=(0,), n_period_cases=20)
