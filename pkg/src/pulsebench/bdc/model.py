"""Functional forward pass of the attention imputer.

Parameters live in a plain ``dict[str, torch.Tensor]`` keyed by the names
from :func:`param_shapes`. Sequences are batch-first ``(B, T, C)``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DimensionError
from ..imputers import ImputerOutput
from ..signal_store import AblationCase
from .config import AttentionStackConfig, param_shapes

log = logging.getLogger(__name__)

ModelParams = dict[str, torch.Tensor]


def relu(x: torch.Tensor) -> torch.Tensor:
    """The model's only non-smooth op; module-level so tests can observe kinks."""
    return F.relu(x)


def init_params(cfg: AttentionStackConfig, seed: int = 0, dtype=torch.float32,
                zero_output: bool = False) -> ModelParams:
    """Fan-in scaled normal init; layer-norm gains 1, all biases 0."""
    gen = torch.Generator().manual_seed(int(seed))
    params: ModelParams = {}
    for name, shape in param_shapes(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            t = torch.ones(shape, dtype=dtype)
        elif leaf == "b":
            t = torch.zeros(shape, dtype=dtype)
        else:
            if len(shape) == 3:  # conv weight (out, in, k)
                fan_in = shape[1] * shape[2]
            else:  # matrix (in, out)
                fan_in = shape[0]
            t = torch.randn(shape, generator=gen, dtype=torch.float64).to(dtype) / math.sqrt(fan_in)
        if zero_output and name.startswith("out."):
            t = torch.zeros(shape, dtype=dtype)
        params[name] = t.requires_grad_(True)
    return params


def _conv(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor | None = None, dilation: int = 1) -> torch.Tensor:
    """Centred 'same' convolution on ``(B, T, C_in)`` -> ``(B, T, C_out)``."""
    pad = (w.shape[-1] - 1) // 2 * dilation
    y = F.conv1d(x.transpose(1, 2), w, b, padding=pad, dilation=dilation)
    return y.transpose(1, 2)


def qk_function(cfg: AttentionStackConfig, params: ModelParams, prefix: str, x: torch.Tensor) -> torch.Tensor:
    """Query or key activations ``(B, T, d)`` for the configured kind."""
    if cfg.qk_kind == "vanilla":
        return x @ params[prefix + "w"]
    if cfg.qk_kind == "conv":
        return _conv(x, params[prefix + "w"])
    h = x
    last = len(cfg.dilations) - 1
    for j, dil in enumerate(cfg.dilations):
        h = _conv(h, params[f"{prefix}down{j}.w"], params[f"{prefix}down{j}.b"])
        h = _conv(h, params[f"{prefix}dil{j}.w"], params[f"{prefix}dil{j}.b"], dilation=dil)
        if j != last:
            h = relu(h)
    return h


def sliding_window_keys(t_q: int, T: int, window_w: int, dilation_g: int) -> list[int]:
    """Admissible keys ``{t_q + j*g : |j| <= w/2}`` clipped to ``[0, T)``."""
    half = window_w // 2
    return [t_q + j * dilation_g for j in range(-half, half + 1) if 0 <= t_q + j * dilation_g < T]


def _window_offsets(cfg: AttentionStackConfig) -> torch.Tensor:
    half = cfg.window_w // 2
    return torch.arange(-half, half + 1) * cfg.dilation_g


@dataclass
class AttentionWeights:
    """Softmax weights for each query over its candidate keys.

    ``key_index[t, j]`` is the key position of column ``j`` for query ``t``,
    or -1 where the candidate falls outside the sequence.
    """

    weights: torch.Tensor  # (B, T, K)
    key_index: torch.Tensor  # (T, K)

    def dense(self) -> torch.Tensor:
        B, T, _ = self.weights.shape
        out = torch.zeros(B, T, T, dtype=self.weights.dtype)
        valid = self.key_index >= 0
        rows = torch.arange(T)[:, None].expand_as(self.key_index)
        out[:, rows[valid], self.key_index[valid]] = self.weights[:, valid]
        return out

    def row(self, query: int, batch: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(key indices, weights) for one query, out-of-range candidates dropped."""
        idx = self.key_index[query]
        keep = idx >= 0
        return idx[keep].numpy(), self.weights[batch, query][keep].detach().double().numpy()


def _softmax_masked(scores: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis restricted to ``allowed``.

    Rows with no allowed entry fall back to uniform weights over the
    in-range candidates of that row.
    """
    empty = ~allowed.any(dim=-1, keepdim=True)
    if bool(empty.any()):
        warnings.warn("a query has no admissible keys; using uniform weights", stacklevel=3)
    scores = scores.masked_fill(~allowed, float("-inf"))
    scores = torch.where(empty, torch.zeros_like(scores), scores)
    return torch.softmax(scores, dim=-1)


def attention_forward(cfg: AttentionStackConfig, params: ModelParams, x: torch.Tensor,
                      key_mask: torch.Tensor | None = None, prefix: str = "layer0.") -> tuple[torch.Tensor, AttentionWeights]:
    """Single-head self-attention with the configured query/key functions.

    ``x`` is ``(B, T, d_x)`` or ``(T, d_x)``. ``key_mask`` (``(B, T)`` bool,
    True = usable) removes keys from every query's admissible set.
    Returns the ``(B, T, d)`` output and the attention weights.
    """
    squeeze = x.dim() == 2
    if squeeze:
        x = x[None]
    B, T, _ = x.shape
    q = qk_function(cfg, params, prefix + "q.", x)
    k = qk_function(cfg, params, prefix + "k.", x)
    v = x @ params[prefix + "v.w"]
    q = q * (1.0 / math.sqrt(cfg.d))
    if key_mask is not None and bool(key_mask.all()):
        key_mask = None

    if cfg.key_range == "full":
        scores = q @ k.transpose(1, 2)
        if key_mask is None:
            w = torch.softmax(scores, dim=-1)
        else:
            w = _softmax_masked(scores, key_mask[:, None, :].expand(B, T, T))
        out = w @ v
        key_index = torch.arange(T)[None, :].expand(T, T)
    else:
        idx = torch.arange(T)[:, None] + _window_offsets(cfg)[None, :]  # (T, K)
        in_range = (idx >= 0) & (idx < T)
        safe = idx.clamp(0, T - 1)
        k_win = k[:, safe]  # (B, T, K, d)
        v_win = v[:, safe]
        scores = torch.einsum("btd,btkd->btk", q, k_win)
        allowed = in_range[None] if key_mask is None else in_range[None] & key_mask[:, safe]
        fallback = in_range[None].expand_as(allowed)
        empty = ~allowed.any(dim=-1, keepdim=True)
        allowed = torch.where(empty, fallback, allowed)
        if bool(empty.any()):
            warnings.warn("a query has no admissible keys; using uniform weights over its window", stacklevel=2)
            scores = torch.where(empty, torch.zeros_like(scores), scores)
        w = torch.softmax(scores.masked_fill(~allowed, float("-inf")), dim=-1)
        out = torch.einsum("btk,btkd->btd", w, v_win)
        key_index = torch.where(in_range, idx, torch.full_like(idx, -1))
    if squeeze:
        out = out[0]
    return out, AttentionWeights(w, key_index)


def positional_encoding(T: int, d: int, dtype=torch.float32) -> torch.Tensor:
    """Standard sinusoidal encoding, ``(T, d)``."""
    pos = torch.arange(T, dtype=torch.float64)[:, None]
    i = torch.arange(0, d, 2, dtype=torch.float64)
    freq = torch.exp(-math.log(10000.0) * i / d)
    pe = torch.zeros(T, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq[: d // 2])
    return pe.to(dtype)


def encoder_layer(cfg: AttentionStackConfig, params: ModelParams, x: torch.Tensor, layer: int,
                  key_mask: torch.Tensor | None = None) -> tuple[torch.Tensor, AttentionWeights]:
    p = f"layer{layer}."
    d = cfg.d
    a, weights = attention_forward(cfg, params, x, key_mask, prefix=p)
    h = F.layer_norm(x + a, (d,), params[p + "ln1.g"], params[p + "ln1.b"])
    ff = relu(h @ params[p + "ff1.w"] + params[p + "ff1.b"]) @ params[p + "ff2.w"] + params[p + "ff2.b"]
    return F.layer_norm(h + ff, (d,), params[p + "ln2.g"], params[p + "ln2.b"]), weights


def model_forward(cfg: AttentionStackConfig, params: ModelParams, x: torch.Tensor,
                  return_attention: bool = False):
    """Full-sequence reconstruction of ``x`` (``(B, T)`` or ``(T,)``)."""
    squeeze = x.dim() == 1
    if squeeze:
        x = x[None]
    if x.dim() != 2:
        raise DimensionError(f"expected (B, T) input, got shape {tuple(x.shape)}")
    if params["embed.w"].shape[0] != cfg.d_x:
        raise DimensionError("parameters do not match config width")
    h = _conv(x[..., None], params["embed.w"], params["embed.b"])
    if cfg.use_positional_encoding:
        h = h + positional_encoding(x.shape[1], cfg.d_x, h.dtype)
    attn = []
    for layer in range(cfg.n_encoder_layers):
        h, w = encoder_layer(cfg, params, h, layer)
        attn.append(w)
    y = _conv(h, params["out.w"], params["out.b"])[..., 0]
    if squeeze:
        y = y[0]
    return (y, attn) if return_attention else y


def grad(params: ModelParams, loss: torch.Tensor) -> dict[str, torch.Tensor]:
    """Reverse-mode gradient of a scalar loss for every parameter tensor."""
    names = list(params)
    gs = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    return {n: (torch.zeros_like(params[n]) if g is None else g) for n, g in zip(names, gs)}


def masked_l2(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over positions where ``mask`` is True."""
    m = mask.to(pred.dtype)
    return ((pred - target) ** 2 * m).sum() / m.sum().clamp_min(1.0)


def impute(cfg: AttentionStackConfig, params: ModelParams, case: AblationCase, batch: int = 1) -> ImputerOutput:
    """Run the model on an ablated case and splice its output into the gaps."""
    dtype = next(iter(params.values())).dtype
    x = torch.tensor(np.array(case.ablated.samples), dtype=dtype)
    with torch.no_grad():
        y = model_forward(cfg, params, x).double().numpy()
    present = case.present
    out = np.where(present, case.ablated.samples, y)
    return ImputerOutput(case.ablated.with_samples(out), present.copy())


class TransformerImputer:
    """Picklable imputer callable wrapping a config and trained parameters."""

    def __init__(self, cfg: AttentionStackConfig, params: ModelParams, name: str | None = None):
        self.cfg = cfg
        self.params = {k: v.detach() for k, v in params.items()}
        self.__name__ = name or cfg.qk_kind

    def __call__(self, case: AblationCase) -> ImputerOutput:
        return impute(self.cfg, self.params, case)
