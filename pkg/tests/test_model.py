import numpy as np
import pytest

from dtfnet import fft
from dtfnet.errors import CheckpointCorrupt, InvalidConfig, ShapeMismatch
from dtfnet.model import (
    VARIANTS,
    ModelConfig,
    block_forward,
    build_net,
    check_compatible,
    count_flops,
    load_checkpoint,
    net_forward,
    save_checkpoint,
)
from dtfnet.oracles import conv1d_temporal_loop, conv2d_3x3_loop
from dtfnet.verify import receptive_field_probe

TINY = dict(channels=(4, 8), blocks=(1, 1), T=8, G=2)


def test_build_is_deterministic():
    cfg = ModelConfig(**TINY)
    assert build_net(cfg, 3).equal(build_net(cfg, 3))
    assert not build_net(cfg, 3).equal(build_net(cfg, 4))


def test_parameter_names_by_variant():
    names = build_net(ModelConfig(**TINY, variant="none"), 0).names()
    assert not any("estimator" in n or "filter" in n or "temporal" in n for n in names)
    assert "block1.temporal.weight" in build_net(ModelConfig(**TINY, variant="dtf_1d"), 0).names()
    assert "block0.filter.weight" in build_net(ModelConfig(**TINY, variant="dtf_f"), 0).names()


def test_estimator_output_dim_g16():
    cfg = ModelConfig(channels=(16,), blocks=(1,), T=16, G=16)
    p = build_net(cfg, 0)
    M = fft.spectrum_size(16)
    assert p["block0.estimator.weight"].shape == (2 * 1 * M, (16 + 9) * 16)


def test_group_factor_clamped():
    cfg = ModelConfig(channels=(4, 8), blocks=(1, 1), G=16)
    assert cfg.group_factor(4) == 4 and cfg.group_factor(8) == 8


def test_invalid_configs():
    with pytest.raises(InvalidConfig):
        ModelConfig(variant="lstm")
    with pytest.raises(InvalidConfig):
        ModelConfig(k=2)
    with pytest.raises(InvalidConfig):
        ModelConfig(channels=(6,), blocks=(1,), G=4)
    with pytest.raises(InvalidConfig):
        ModelConfig(channels=(4,), blocks=(1,), variant_stages=(1,))


def test_uniform_init_bounds():
    p = build_net(ModelConfig(**TINY), 0)
    assert np.max(np.abs(p["block0.conv.weight"])) <= 1 / np.sqrt(4 * 9)
    assert np.max(np.abs(p["head.weight"])) <= 1 / np.sqrt(8)


def test_zero_path_is_residual_identity(rng):
    for variant in ("none", "dtf"):
        cfg = ModelConfig(**TINY, variant=variant)
        p = build_net(cfg, 0)
        p["block0.conv.weight"] = np.zeros_like(p["block0.conv.weight"])
        p["block0.conv.bias"] = np.zeros_like(p["block0.conv.bias"])
        x = rng.normal(size=(1, 4, 8, 4, 4))
        np.testing.assert_array_equal(block_forward(x, p, "block0", variant, cfg), x)


def test_dtf_1d_block_matches_loops(rng):
    cfg = ModelConfig(channels=(3,), blocks=(1,), T=5, G=1, variant="dtf_1d")
    p = build_net(cfg, 2)
    x = rng.normal(size=(1, 3, 5, 3, 3))
    h = conv2d_3x3_loop(x, p["block0.conv.weight"], p["block0.conv.bias"])
    h = h / np.sqrt((h**2).mean(axis=(2, 3, 4), keepdims=True) + 1e-6) * p["block0.norm.weight"][None, :, None, None, None]
    h = np.maximum(h, 0)
    ref = x + conv1d_temporal_loop(h, p["block0.temporal.weight"], p["block0.temporal.bias"])
    assert np.max(np.abs(block_forward(x, p, "block0", "dtf_1d", cfg) - ref)) < 1e-10


@pytest.mark.parametrize("variant", VARIANTS)
def test_identical_clips_identical_logits(variant, rng):
    cfg = ModelConfig(**TINY, variant=variant)
    p = build_net(cfg, 0)
    clip = np.repeat(rng.normal(size=(1, 1, 8, 6, 6)), 3, axis=0)
    out = net_forward(p, clip, cfg)
    assert out.shape == (3, 4)
    assert out[0].tobytes() == out[1].tobytes() == out[2].tobytes()


def test_zero_head_gives_bias(rng):
    cfg = ModelConfig(**TINY)
    p = build_net(cfg, 0)
    p["head.weight"] = np.zeros_like(p["head.weight"])
    out = net_forward(p, rng.normal(size=(2, 1, 8, 6, 6)), cfg)
    np.testing.assert_array_equal(out, np.broadcast_to(p["head.bias"], (2, 4)))


def test_golden_logits():
    cfg = ModelConfig(channels=(4, 8), blocks=(1, 1), T=8, G=2)
    p = build_net(cfg, 11)
    clip = np.random.default_rng(12).normal(size=(2, 1, 8, 6, 6))
    golden = np.array([
        [-0.01682200346477261, -0.44846616914216614, -0.30051808262006796, 0.05663674189369389],
        [-0.07974244897681625, -0.44439427187173247, -0.127581077707298, -0.15545560102800057],
    ])
    np.testing.assert_allclose(net_forward(p, clip, cfg), golden, rtol=0, atol=1e-12)


def test_clip_shape_checked():
    cfg = ModelConfig(**TINY)
    with pytest.raises(ShapeMismatch):
        net_forward(build_net(cfg, 0), np.zeros((1, 1, 7, 6, 6)), cfg)


def test_receptive_field_separation():
    assert receptive_field_probe("dtf_1d", T=16) == 0.0
    assert receptive_field_probe("dtf", T=16) > 0.0
    assert receptive_field_probe("dtf_f", T=16) > 0.0


def test_parameter_count_ordering():
    def count(**kw):
        return build_net(ModelConfig(channels=(16,), blocks=(1,), T=16, **kw), 0).num_params()

    assert count(variant="dtf", G=16) < count(variant="dtf", G=1)
    assert count(variant="dtf_f") < count(variant="dtf")


def test_flops_grow_with_temporal_modelling():
    f = {v: count_flops(ModelConfig(**TINY, variant=v), 8, 8) for v in VARIANTS}
    assert f["none"] < f["dtf_1d"] < f["dtf"]
    assert f["dtf_f"] < f["dtf"]


def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig(**TINY)
    p = build_net(cfg, 5)
    path = save_checkpoint(tmp_path / "m.ckpt", p, cfg.to_items())
    q, items = load_checkpoint(path)
    assert q.equal(p)
    assert ModelConfig.from_items(items) == cfg
    check_compatible(q, cfg)
    again = save_checkpoint(tmp_path / "m2.ckpt", q, items)
    assert again.read_bytes() == path.read_bytes()


@pytest.mark.parametrize("damage", ["truncate", "magic", "trailing"])
def test_checkpoint_corruption(tmp_path, damage):
    cfg = ModelConfig(**TINY)
    path = save_checkpoint(tmp_path / "m.ckpt", build_net(cfg, 5), cfg.to_items())
    data = path.read_bytes()
    data = {"truncate": data[:-9], "magic": b"XXXX" + data[4:], "trailing": data + b"\0"}[damage]
    path.write_bytes(data)
    with pytest.raises(CheckpointCorrupt):
        load_checkpoint(path)


def test_incompatible_checkpoint():
    p = build_net(ModelConfig(**TINY, variant="dtf"), 0)
    with pytest.raises(CheckpointCorrupt):
        check_compatible(p, ModelConfig(**TINY, variant="dtf_1d"))
