"""Attention imputers with vanilla, convolutional and bottleneck-dilated query/key functions."""
from .analysis import export_attention, periodic_mass, read_attention
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (AttentionStackConfig, balance_width, matched_triple, param_count, param_shapes,
                     qk_param_count, receptive_field)
from .model import (AttentionWeights, TransformerImputer, attention_forward, grad, impute, init_params,
                    masked_l2, model_forward, positional_encoding, qk_function, sliding_window_keys)
from .train import MPCMaskPolicy, OptimizerConfig, TrainResult, mpc_ablate, smooth, train

__all__ = [
    "AttentionStackConfig", "AttentionWeights", "MPCMaskPolicy", "OptimizerConfig", "TrainResult",
    "TransformerImputer", "attention_forward", "balance_width", "export_attention", "grad", "impute",
    "init_params", "load_checkpoint", "masked_l2", "matched_triple", "model_forward", "mpc_ablate",
    "param_count", "param_shapes", "periodic_mass", "positional_encoding", "qk_param_count",
    "qk_function", "read_attention", "receptive_field", "save_checkpoint", "sliding_window_keys", "smooth", "train",
]
