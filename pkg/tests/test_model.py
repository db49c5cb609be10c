import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanunet.attention import ConfigError
from fanunet.losses import combined_loss
from fanunet.model import FanUNet, UNetConfig, VisionFanBlock, VisionFanBlockConfig, count_parameters
from fanunet.nn import ConvUnit
from fanunet.optim import AdamW
from fanunet.tensor import ShapeError, Tensor

TINY = dict(input_resolution=16, base_channels=4, num_stages=1, window_size=8, num_heads=4)


def block(seed=0, channels=8, size=4, **toggles):
    cfg = VisionFanBlockConfig(channels, window_size=4, num_heads=2, **toggles)
    return VisionFanBlock(cfg, size, size, np.random.default_rng(seed), dtype=np.float64)


def test_block_all_off_is_identity():
    blk = block(enable_positional=False, enable_attention=False, enable_fan_ffn=False)
    x = np.random.default_rng(1).normal(size=(2, 8, 4, 4))
    np.testing.assert_array_equal(blk(Tensor(x, dtype=np.float64)).data, x)
    assert blk.num_parameters() == 0


@pytest.mark.parametrize(
    "toggles",
    [
        {},
        {"enable_positional": False},
        {"enable_attention": False},
        {"enable_fan_ffn": False},
        {"enable_attention": False, "enable_fan_ffn": False},
    ],
)
def test_block_preserves_shape(toggles):
    blk = block(size=8, **toggles)
    x = Tensor(np.random.default_rng(2).normal(size=(2, 8, 8, 8)), dtype=np.float64)
    assert blk(x).shape == (2, 8, 8, 8)


def test_block_residual_uses_unembedded_input():
    blk = block(enable_attention=False, enable_fan_ffn=False)
    x = np.random.default_rng(3).normal(size=(1, 8, 4, 4))
    np.testing.assert_allclose(blk(Tensor(x, dtype=np.float64)).data, x + blk.pos.table.data)


def test_block_ffn_only_matches_manual_composition():
    blk = block(enable_positional=False, enable_attention=False)
    x = Tensor(np.random.default_rng(4).normal(size=(1, 8, 4, 4)), dtype=np.float64)
    np.testing.assert_allclose(blk(x).data, (x + blk.ffn(blk.norm2(x))).data, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_block_without_attention_or_position_is_pixelwise(seed):
    blk = block(seed, enable_positional=False, enable_attention=False)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, 8, 4, 4))
    perm = rng.permutation(16)
    shuffled = x.reshape(1, 8, 16)[:, :, perm].reshape(1, 8, 4, 4)
    a = blk(Tensor(shuffled, dtype=np.float64)).data
    b = blk(Tensor(x, dtype=np.float64)).data.reshape(1, 8, 16)[:, :, perm].reshape(1, 8, 4, 4)
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("res,window", [(64, 4), (128, 8), (256, 8)])
def test_unet_output_shape(res, window):
    cfg = UNetConfig(input_resolution=res, base_channels=4, window_size=window, num_heads=2)
    out = FanUNet(cfg)(Tensor(np.random.default_rng(0).uniform(size=(1, 3, res, res))))
    assert out.shape == (1, 1, res, res)
    assert np.all(np.isfinite(out.data))


@settings(max_examples=6, deadline=None)
@given(stages=st.integers(0, 3), batch=st.integers(1, 2))
def test_unet_shape_law(stages, batch):
    res = 8 * 2**stages
    cfg = UNetConfig(input_resolution=res, num_stages=stages, base_channels=4, window_size=8, num_heads=2)
    out = FanUNet(cfg)(Tensor(np.zeros((batch, 3, res, res))))
    assert out.shape == (batch, 1, res, res)


def test_every_parameter_receives_gradient():
    model = FanUNet(UNetConfig(**TINY), seed=0, dtype=np.float64)
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(size=(2, 3, 16, 16)), dtype=np.float64)
    target = (rng.uniform(size=(2, 1, 16, 16)) > 0.5).astype(np.float64)
    combined_loss(model(x), target).backward()
    for name, p in model.named_parameters():
        assert p.grad is not None, name
        assert np.all(np.isfinite(p.grad)), name
        assert np.abs(p.grad).max() > 0, name


def test_short_overfit_mostly_decreases():
    model = FanUNet(UNetConfig(**TINY), seed=0)
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(size=(1, 3, 16, 16)))
    target = np.zeros((1, 1, 16, 16), dtype=np.float32)
    target[..., 4:12, 4:12] = 1
    opt = AdamW(model.parameters(), lr=1e-2, weight_decay=0.0)
    losses = []
    for _ in range(11):
        loss = combined_loss(model(x), target)
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    drops = sum(b < a for a, b in zip(losses, losses[1:]))
    assert drops >= 8, losses


def test_zero_stages_is_only_the_head():
    model = FanUNet(UNetConfig(num_stages=0, input_resolution=16))
    assert count_parameters(model) == 3 * 1 + 1
    assert model(Tensor(np.zeros((1, 3, 16, 16)))).shape == (1, 1, 16, 16)


def test_doubling_base_width_roughly_quadruples_parameters():
    small = count_parameters(FanUNet(UNetConfig(input_resolution=64, base_channels=8, window_size=4)))
    large = count_parameters(FanUNet(UNetConfig(input_resolution=64, base_channels=16, window_size=4)))
    assert abs(large / small - 4.0) / 4.0 < 0.1


def test_ablation_parameter_deltas():
    base = dict(input_resolution=64, base_channels=8, window_size=4, num_heads=4)
    C, extent = 8 * 16, 4  # bottleneck width and extent for 4 stages
    full = count_parameters(FanUNet(UNetConfig(**base)))
    no_pos = count_parameters(FanUNet(UNetConfig(**base, enable_positional=False)))
    no_attn = count_parameters(FanUNet(UNetConfig(**base, enable_attention=False)))
    no_fan = count_parameters(FanUNet(UNetConfig(**base, enable_fan_ffn=False)))
    none = count_parameters(FanUNet(UNetConfig(**base, enable_positional=False, enable_attention=False, enable_fan_ffn=False)))
    d_p, d_g = C // 4, C - 2 * (C // 4)
    assert full - no_pos == C * extent * extent
    assert full - no_attn == 2 * C + 4 * (C * C + C)
    assert full - no_fan == 2 * C + C * d_p + d_p + C * d_g + d_g
    conv_unit = 9 * C * C + C + 2 * C
    assert full - none == C * extent * extent + 2 * C + 4 * (C * C + C) + 2 * C + C * d_p + d_p + C * d_g + d_g - conv_unit


def test_all_toggles_off_substitutes_conv_unit():
    model = FanUNet(UNetConfig(input_resolution=32, base_channels=4, enable_positional=False, enable_attention=False, enable_fan_ffn=False))
    assert isinstance(model.bottleneck[1], ConvUnit)


def test_deterministic_forward_and_seed_sensitivity():
    cfg = UNetConfig(**TINY)
    x = Tensor(np.random.default_rng(0).uniform(size=(1, 3, 16, 16)))
    a, b = FanUNet(cfg, seed=7)(x).data, FanUNet(cfg, seed=7)(x).data
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, FanUNet(cfg, seed=8)(x).data)


def test_wrong_resolution_rejected():
    model = FanUNet(UNetConfig(**TINY))
    with pytest.raises(ShapeError, match="16, 16"):
        model(Tensor(np.zeros((1, 3, 32, 32))))


@pytest.mark.parametrize(
    "cfg",
    [
        dict(input_resolution=60),
        dict(input_resolution=64, window_size=8),
        dict(input_resolution=64, window_size=4, base_channels=3, num_heads=5),
    ],
)
def test_invalid_configs_rejected(cfg):
    with pytest.raises(ConfigError):
        FanUNet(UNetConfig(**cfg))


def test_encoder_block_option_adds_a_stage_block():
    base = count_parameters(FanUNet(UNetConfig(**TINY)))
    extra = FanUNet(UNetConfig(**TINY, encoder_block=True))
    assert len(extra.encoder_blocks) == 1
    assert count_parameters(extra) > base
    assert extra(Tensor(np.zeros((1, 3, 16, 16)))).shape == (1, 1, 16, 16)


def test_config_round_trip():
    cfg = UNetConfig(**TINY, enable_attention=False)
    assert UNetConfig.from_dict(cfg.to_dict()) == cfg
