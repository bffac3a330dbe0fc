"""Masked-predictive-coding training loop.

Each step draws a batch of cases, draws a fresh mask per case (or reuses
the case's own mask), corrupts every missing run according to
:class:`MPCMaskPolicy`, and takes one Adam step on the L2 loss over the
designated positions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, InsufficientDataError, TrainingDivergedError
from ..missingness import MissingnessSpec, make_mask
from ..rng import derive_seed, make_rng
from ..signal_store import SAMPLE_RATE_HZ, AblationCase, MissingnessMask
from .config import AttentionStackConfig
from .model import ModelParams, init_params, masked_l2, model_forward

log = logging.getLogger(__name__)

ZERO, NOISE, KEEP = 0, 1, 2


@dataclass(frozen=True)
class MPCMaskPolicy:
    p_zero: float = 0.8
    p_noise: float = 0.1
    p_keep: float = 0.1
    noise_amp: tuple[float, float] = (0.1, 0.5)  # fraction of signal range
    noise_freq_hz: tuple[float, float] = (0.5, 5.0)

    def __post_init__(self):
        probs = (self.p_zero, self.p_noise, self.p_keep)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"MPC probabilities must be nonnegative and sum to 1, got {probs}")

    @property
    def probs(self) -> np.ndarray:
        return np.array([self.p_zero, self.p_noise, self.p_keep])


def _missing_runs(mask: MissingnessMask) -> list[tuple[int, int]]:
    runs, pos = [], 0
    for flag, n in mask.runs:
        if flag == 0:
            runs.append((pos, n))
        pos += n
    return runs


def mpc_ablate(x: np.ndarray, mask: MissingnessMask, policy: MPCMaskPolicy = MPCMaskPolicy(), seed: int = 0,
               rate_hz: float = SAMPLE_RATE_HZ) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Corrupt every missing run of ``mask`` in ``x``.

    Returns
    -------
    corrupted : ndarray
        Training input.
    target_mask : ndarray of bool
        Positions that enter the loss (every missing sample).
    treatments : list of int
        Per-run branch: 0 zeroed, 1 sinusoid added, 2 kept.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(mask) != x.size:
        raise ConfigError("mask and signal lengths differ")
    rng = make_rng(seed)
    out = x.copy()
    span = float(x.max() - x.min()) or 1.0
    treatments = []
    for start, n in _missing_runs(mask):
        branch = int(rng.choice(3, p=policy.probs))
        seg = slice(start, start + n)
        if branch == ZERO:
            out[seg] = 0.0
        elif branch == NOISE:
            amp = rng.uniform(*policy.noise_amp) * span
            freq = rng.uniform(*policy.noise_freq_hz)
            phase = rng.uniform(0, 2 * math.pi)
            t = np.arange(n) / rate_hz
            out[seg] = x[seg] + amp * np.sin(2 * math.pi * freq * t + phase)
        treatments.append(branch)
    return out, ~mask.to_dense(), treatments


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    batch_size: int = 4
    betas: tuple[float, float] = (0.9, 0.999)
    grad_clip: float | None = 1.0


@dataclass
class TrainResult:
    params: ModelParams
    loss_trace: list[float]
    checkpoints: list[Path] = field(default_factory=list)

    def smoothed(self, window: int = 10) -> np.ndarray:
        return smooth(self.loss_trace, window)


def smooth(trace, window: int = 10) -> np.ndarray:
    """Means over consecutive non-overlapping windows."""
    a = np.asarray(trace, dtype=np.float64)
    n = a.size // window
    return a[: n * window].reshape(n, window).mean(axis=1) if n else a[:0]


def _batch(cases, idx, step, seed, mask_spec, policy, dtype):
    xs, ys, ms = [], [], []
    for slot, i in enumerate(idx):
        case = cases[i]
        gt = case.ground_truth.samples
        if mask_spec is None:
            mask = case.mask
        else:
            mask = make_mask(mask_spec, gt.size, seed=derive_seed(seed, "mask", step, slot))
        x, m, _ = mpc_ablate(gt, mask, policy, seed=derive_seed(seed, "mpc", step, slot),
                             rate_hz=case.ground_truth.sample_rate_hz)
        xs.append(x)
        ys.append(gt)
        ms.append(m)
    as_t = lambda a: torch.as_tensor(np.stack(a), dtype=dtype)
    return as_t(xs), as_t(ys), torch.as_tensor(np.stack(ms))


def train(cfg: AttentionStackConfig, cases: list[AblationCase], opt: OptimizerConfig = OptimizerConfig(),
          steps: int = 2000, seed: int = 0, mask_spec: MissingnessSpec | None = None,
          policy: MPCMaskPolicy = MPCMaskPolicy(), checkpoint_dir: str | Path | None = None,
          checkpoint_every: int = 500, dtype=torch.float32, init: ModelParams | None = None,
          divergence_factor: float = 10.0, log_every: int = 100) -> TrainResult:
    """Train from scratch (or from ``init``) for ``steps`` optimizer steps.

    Training cases must share one length. With ``mask_spec`` set, a fresh
    mask is drawn for every example of every step; otherwise each case's
    own mask is used. Deterministic given ``seed``.

    Raises
    ------
    TrainingDivergedError
        If the loss is non-finite or exceeds ``divergence_factor`` times the
        first-step loss.
    """
    if not cases:
        raise InsufficientDataError("training needs at least one case")
    lengths = {len(c.ground_truth) for c in cases}
    if len(lengths) != 1:
        raise ConfigError(f"training cases must share one length, got {sorted(lengths)}")
    from .checkpoint import save_checkpoint

    torch.manual_seed(derive_seed(seed, "torch") % (2**63))
    params = init if init is not None else init_params(cfg, seed=derive_seed(seed, "init"), dtype=dtype)
    params = {k: v.detach().clone().to(dtype).requires_grad_(True) for k, v in params.items()}
    optim = torch.optim.Adam(params.values(), lr=opt.lr, betas=opt.betas)
    rng = make_rng(derive_seed(seed, "batches"))
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    trace: list[float] = []
    saved: list[Path] = []
    first = None
    for step in range(steps):
        idx = rng.integers(0, len(cases), size=opt.batch_size)
        x, y, m = _batch(cases, idx, step, seed, mask_spec, policy, dtype)
        loss = masked_l2(model_forward(cfg, params, x), y, m)
        val = float(loss.detach())
        if first is None:
            first = val
        if not math.isfinite(val) or val > divergence_factor * max(first, 1e-12):
            raise TrainingDivergedError(
                f"loss {val:.4g} at step {step} exceeds {divergence_factor}x the initial loss {first:.4g}")
        trace.append(val)
        optim.zero_grad(set_to_none=True)
        loss.backward()
        if opt.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(list(params.values()), opt.grad_clip)
        optim.step()
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.5f", step + 1, float(np.mean(trace[-log_every:])))
        if ckpt_dir is not None and ((step + 1) % checkpoint_every == 0 or step + 1 == steps):
            path = ckpt_dir / f"step{step + 1:06d}.ckpt"
            save_checkpoint(path, cfg, params, meta={"step": step + 1, "seed": seed,
                                                     "optimizer": asdict(opt)})
            saved.append(path)
    final = {k: v.detach() for k, v in params.items()}
    return TrainResult(final, trace, saved)
