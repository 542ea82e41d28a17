import numpy as np
import pytest

from dtfnet.dtf import read_filter_csv
from dtfnet.errors import OutOfRange, VariantMismatch
from dtfnet.export import blob_center, export_filters
from dtfnet.model import ModelConfig, build_net, dynamic_filter_maps, save_checkpoint
from dtfnet.training import RunConfig


def _checkpoint(tmp_path, **kw):
    cfg = RunConfig(channels=(4,), blocks=(1,), T=8, H=8, W=8, G=4, **kw)
    params = build_net(cfg.model_config(), 0)
    return save_checkpoint(tmp_path / "m.ckpt", params, cfg.to_items()), params, cfg


def test_variant_mismatch(tmp_path):
    ckpt, _, _ = _checkpoint(tmp_path, variant="dtf_1d")
    with pytest.raises(VariantMismatch):
        export_filters(ckpt, 0)


def test_identity_init_exports_delta(tmp_path):
    ckpt, _, _ = _checkpoint(tmp_path, variant="dtf")
    out = export_filters(ckpt, probe_seed=3, out_dir=tmp_path / "f")
    assert len(out.kernels) == 3
    delta = np.zeros(8)
    delta[0] = 1.0
    for loc, kern in out.kernels.items():
        assert np.max(np.abs(kern - delta)) < 0.05
        S, k2 = read_filter_csv(out.paths[loc])
        np.testing.assert_array_equal(k2, kern)
        np.testing.assert_array_equal(S.re, out.filters[loc].re)


def test_identical_inputs_give_identical_filters():
    cfg = ModelConfig(channels=(4,), blocks=(1,), T=8, G=2)
    params = build_net(cfg, 1)
    for name in params.names():
        if "estimator.weight" in name:
            params[name] = np.random.default_rng(0).normal(size=params[name].shape)
    # spatially constant clip: interior locations see the same receptive field
    trace = np.random.default_rng(2).normal(size=8)
    clip = np.broadcast_to(trace[None, None, :, None, None], (1, 1, 8, 12, 12)).copy()
    fmap = dynamic_filter_maps(params, clip, cfg)[0]
    np.testing.assert_array_equal(fmap[0, 5, 5], fmap[0, 6, 7])
    assert np.max(np.abs(fmap[0, 0, 0] - fmap[0, 5, 5])) > 0  # border sees padding


def test_blob_center_finds_oscillating_pixel():
    clip = np.zeros((1, 10, 5, 6))
    clip[0, :, 3, 1] = np.sin(np.arange(10))
    assert blob_center(clip) == (3, 1)


def test_location_out_of_range(tmp_path):
    ckpt, _, _ = _checkpoint(tmp_path, variant="dtf")
    with pytest.raises(OutOfRange):
        export_filters(ckpt, 0, locations=[(8, 0)])


def test_probe_size_override(tmp_path):
    ckpt, _, _ = _checkpoint(tmp_path, variant="dtf")
    out = export_filters(ckpt, 0, locations=[(15, 15)], probe_size=(16, 16))
    assert out.clip.shape == (1, 8, 16, 16)
    assert out.distance((15, 15), (15, 15)) == 0.0
