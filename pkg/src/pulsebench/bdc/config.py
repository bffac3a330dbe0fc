"""Architecture description for the attention-imputer family.

Three query/key functions share one skeleton (embedding conv, encoder
layers, projection conv):

* ``vanilla``: pointwise linear maps.
* ``conv``: one centred convolution of odd width ``filter_size``.
* ``bdc``: a stack of blocks, each a 1x1 bottleneck projection followed by
  a dilated convolution, with ReLU between blocks.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from ..errors import ConfigError

QK_KINDS = ("vanilla", "conv", "bdc")
KEY_RANGES = ("full", "sliding")


@dataclass(frozen=True)
class AttentionStackConfig:
    d_x: int = 32
    d: int = 32
    qk_kind: str = "bdc"
    filter_size: int = 15
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    bottleneck_dim: int | None = None
    use_positional_encoding: bool = False
    key_range: str = "full"
    window_w: int = 256
    dilation_g: int = 1
    n_encoder_layers: int = 2
    d_ff: int | None = None
    embed_kernel: int = 1
    out_kernel: int = 1

    def __post_init__(self):
        if self.qk_kind not in QK_KINDS:
            raise ConfigError(f"qk_kind must be one of {QK_KINDS}")
        if self.key_range not in KEY_RANGES:
            raise ConfigError(f"key_range must be one of {KEY_RANGES}")
        if self.d_x < 1 or self.d < 1 or self.n_encoder_layers < 1:
            raise ConfigError("dimensions and layer count must be positive")
        if self.d_x != self.d:
            raise ConfigError("encoder residual connections need d_x == d")
        if self.qk_kind in ("conv", "bdc") and (self.filter_size <= 1 or self.filter_size % 2 == 0):
            raise ConfigError("filter_size must be odd and greater than 1")
        if self.qk_kind == "bdc":
            if not self.dilations:
                raise ConfigError("bdc needs at least one dilation")
            if any(b <= a for a, b in zip(self.dilations, self.dilations[1:])) or self.dilations[0] < 1:
                raise ConfigError("dilations must be positive and strictly increasing")
            if self.bottleneck < 1:
                raise ConfigError("bottleneck_dim must be positive")
        if self.window_w < 1 or self.dilation_g < 1:
            raise ConfigError("window_w and dilation_g must be at least 1")
        for k in (self.embed_kernel, self.out_kernel):
            if k < 1 or k % 2 == 0:
                raise ConfigError("embedding/projection kernels must be odd")
        object.__setattr__(self, "dilations", tuple(int(v) for v in self.dilations))

    @property
    def bottleneck(self) -> int:
        return self.bottleneck_dim if self.bottleneck_dim is not None else max(1, self.d // 4)

    @property
    def ff_dim(self) -> int:
        return self.d_ff if self.d_ff is not None else 2 * self.d

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dilations"] = list(self.dilations)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionStackConfig":
        d = dict(d)
        if "dilations" in d:
            d["dilations"] = tuple(d["dilations"])
        return cls(**d)

    def with_width(self, d: int) -> "AttentionStackConfig":
        return replace(self, d=d, d_x=d)


def receptive_field(cfg: AttentionStackConfig) -> int:
    """Input samples seen by one query/key activation."""
    if cfg.qk_kind == "vanilla":
        return 1
    if cfg.qk_kind == "conv":
        return cfg.filter_size
    return 1 + sum((cfg.filter_size - 1) * d for d in cfg.dilations)


def qk_shapes(cfg: AttentionStackConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter shapes of one query (or key) function, suffix names only."""
    if cfg.qk_kind == "vanilla":
        return [("w", (cfg.d_x, cfg.d))]
    if cfg.qk_kind == "conv":
        return [("w", (cfg.d, cfg.d_x, cfg.filter_size))]
    b = cfg.bottleneck
    shapes = []
    for j, _ in enumerate(cfg.dilations):
        c_in = cfg.d_x if j == 0 else cfg.d
        shapes += [(f"down{j}.w", (b, c_in, 1)), (f"down{j}.b", (b,)),
                   (f"dil{j}.w", (cfg.d, b, cfg.filter_size)), (f"dil{j}.b", (cfg.d,))]
    return shapes


def param_shapes(cfg: AttentionStackConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Every learnable tensor of the model, in allocation order."""
    d, f = cfg.d, cfg.ff_dim
    shapes = [("embed.w", (cfg.d_x, 1, cfg.embed_kernel)), ("embed.b", (cfg.d_x,))]
    for layer in range(cfg.n_encoder_layers):
        p = f"layer{layer}."
        for role in ("q", "k"):
            shapes += [(f"{p}{role}.{name}", shape) for name, shape in qk_shapes(cfg)]
        shapes += [
            (p + "v.w", (cfg.d_x, d)),
            (p + "ln1.g", (d,)), (p + "ln1.b", (d,)),
            (p + "ff1.w", (d, f)), (p + "ff1.b", (f,)),
            (p + "ff2.w", (f, d)), (p + "ff2.b", (d,)),
            (p + "ln2.g", (d,)), (p + "ln2.b", (d,)),
        ]
    shapes += [("out.w", (1, d, cfg.out_kernel)), ("out.b", (1,))]
    return shapes


def qk_param_count(cfg: AttentionStackConfig) -> int:
    """Closed-form size of one query (or key) function."""
    d_x, d = cfg.d_x, cfg.d
    if cfg.qk_kind == "vanilla":
        return d_x * d
    if cfg.qk_kind == "conv":
        return cfg.filter_size * d_x * d
    b, n = cfg.bottleneck, len(cfg.dilations)
    first = d_x * b + b + b * cfg.filter_size * d + d
    rest = d * b + b + b * cfg.filter_size * d + d
    return first + (n - 1) * rest


def param_count(cfg: AttentionStackConfig) -> int:
    """Closed-form parameter count; agrees with :func:`param_shapes` exactly."""
    d, f = cfg.d, cfg.ff_dim
    embed = cfg.d_x * cfg.embed_kernel + cfg.d_x
    per_layer = 2 * qk_param_count(cfg) + cfg.d_x * d + 4 * d + (d * f + f) + (f * d + d)
    out = d * cfg.out_kernel + 1
    return embed + cfg.n_encoder_layers * per_layer + out


def balance_width(cfg: AttentionStackConfig, target: int, step: int = 4, max_d: int = 1024) -> AttentionStackConfig:
    """Width (a multiple of ``step``) whose parameter count is closest to ``target``."""
    best = None
    for d in range(step, max_d + 1, step):
        cand = cfg.with_width(d)
        gap = abs(param_count(cand) - target)
        if best is None or gap < best[0]:
            best = (gap, cand)
    return best[1]


def matched_triple(bdc: AttentionStackConfig) -> dict[str, AttentionStackConfig]:
    """Vanilla, conv-9 and the given BDC config at roughly equal parameter count."""
    target = param_count(bdc)
    return {
        "vanilla": balance_width(replace(bdc, qk_kind="vanilla"), target),
        "conv": balance_width(replace(bdc, qk_kind="conv", filter_size=9), target),
        "bdc": bdc,
    }
