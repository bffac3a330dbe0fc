import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsebench.bdc import (AttentionStackConfig, init_params, matched_triple, param_count, param_shapes,
                            qk_param_count, receptive_field)
from pulsebench.errors import ConfigError


def test_receptive_field_examples():
    assert receptive_field(AttentionStackConfig(qk_kind="vanilla")) == 1
    assert receptive_field(AttentionStackConfig(qk_kind="conv", filter_size=9)) == 9
    assert receptive_field(AttentionStackConfig(qk_kind="bdc", filter_size=15, dilations=(1, 2, 4, 8, 16, 32))) == 883


dilation_lists = st.lists(st.integers(1, 64), min_size=1, max_size=6, unique=True).map(sorted).map(tuple)


@given(st.integers(1, 20).map(lambda k: 2 * k + 1), dilation_lists, st.integers(0, 5))
def test_receptive_field_monotone(f, dil, bump_at):
    base = AttentionStackConfig(filter_size=f, dilations=dil)
    assert receptive_field(AttentionStackConfig(filter_size=f + 2, dilations=dil)) > receptive_field(base)
    j = bump_at % len(dil)
    bumped = list(dil)
    bumped[j] += 1
    if all(b > a for a, b in zip(bumped, bumped[1:])):
        assert receptive_field(AttentionStackConfig(filter_size=f, dilations=tuple(bumped))) > receptive_field(base)


@pytest.mark.parametrize("kw", [dict(filter_size=4), dict(filter_size=1), dict(dilations=(2, 2)),
                                dict(dilations=(4, 2)), dict(d=8, d_x=16), dict(qk_kind="lstm"),
                                dict(key_range="local"), dict(embed_kernel=2)])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        AttentionStackConfig(**kw)


def test_vanilla_block_count():
    cfg = AttentionStackConfig(qk_kind="vanilla", d=64, d_x=64)
    assert 2 * qk_param_count(cfg) + cfg.d_x * cfg.d == 12_288


@given(st.sampled_from(["vanilla", "conv", "bdc"]), st.integers(1, 6).map(lambda k: 4 * k),
       st.integers(1, 3), st.sampled_from([1, 3]), st.booleans())
def test_param_count_matches_allocation(kind, d, layers, kernel, bottleneck):
    cfg = AttentionStackConfig(d=d, d_x=d, qk_kind=kind, filter_size=5, dilations=(1, 3, 9),
                               n_encoder_layers=layers, embed_kernel=kernel, out_kernel=kernel,
                               bottleneck_dim=3 if bottleneck else None)
    params = init_params(cfg, seed=0)
    assert sum(p.numel() for p in params.values()) == param_count(cfg)
    assert [n for n, _ in param_shapes(cfg)] == list(params)


def test_matched_triple_within_five_percent():
    trip = matched_triple(AttentionStackConfig())
    counts = [param_count(c) for c in trip.values()]
    assert max(counts) / min(counts) < 1.05
    assert trip["conv"].filter_size == 9


def test_config_dict_roundtrip():
    cfg = AttentionStackConfig(key_range="sliding", window_w=64, dilation_g=2)
    assert AttentionStackConfig.from_dict(cfg.to_dict()) == cfg
