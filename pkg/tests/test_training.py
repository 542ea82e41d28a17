import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtfnet.errors import CheckpointCorrupt, ConfigError, OutOfRange
from dtfnet.model import build_net, load_checkpoint
from dtfnet.training import (
    METRICS_HEADER,
    RunConfig,
    bench,
    bench_csv,
    cosine_lr,
    evaluate,
    read_config_file,
    splits,
    train,
)

MICRO = dict(channels=(2,), blocks=(1,), T=8, H=4, W=4, G=2, train_per_class=4, val_per_class=4, epochs=1)


def test_cosine_lr_examples():
    assert cosine_lr(0, 10, 0.04) == 0.04
    assert abs(cosine_lr(10, 10, 0.04)) < 1e-18
    assert abs(cosine_lr(5, 10, 0.04) - 0.02) < 1e-15


def test_cosine_lr_out_of_range():
    with pytest.raises(OutOfRange):
        cosine_lr(11, 10, 0.1)
    with pytest.raises(OutOfRange):
        cosine_lr(-1, 10, 0.1)
    with pytest.raises(OutOfRange):
        cosine_lr(0, 0, 0.1)


@given(st.integers(1, 500), st.floats(0.0, 1.0))
def test_cosine_lr_non_increasing(total, base):
    lrs = [cosine_lr(s, total, base) for s in range(total + 1)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(epochs=0)
    with pytest.raises(ConfigError):
        RunConfig(base_lr=-0.1)
    with pytest.raises(ConfigError):
        RunConfig(variant="rnn")
    with pytest.raises(ConfigError):
        RunConfig.from_items({"no_such_key": "1"})
    with pytest.raises(ConfigError):
        RunConfig.from_items({"epochs": "three"})


def test_config_items_roundtrip():
    cfg = RunConfig(channels=(4, 8), blocks=(1, 1), variant_stages=(0,), sigma=0.3, periods=(16, 8, 6, 4.5))
    assert RunConfig.from_items(cfg.to_items()) == cfg
    cfg = RunConfig(T=8, cycles=(1, 2, 3, 4))
    assert RunConfig.from_items(cfg.to_items()) == cfg


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nchannels = 4,8\nblocks = 1,1\nbase-lr = 0.1  # trailing\n\nvariant=dtf_f\n")
    items = read_config_file(path)
    cfg = RunConfig.from_items(items)
    assert cfg.channels == (4, 8) and cfg.base_lr == 0.1 and cfg.variant == "dtf_f"
    path.write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_splits_are_disjoint_and_deterministic():
    cfg = RunConfig(**MICRO)
    tr, va = splits(cfg)
    tr2, _ = splits(cfg)
    assert all(a.tobytes() == b.tobytes() for (a, _), (b, _) in zip(tr, tr2))
    train_bytes = {c.tobytes() for c, _ in tr}
    assert not any(c.tobytes() in train_bytes for c, _ in va)


def test_zero_lr_leaves_parameters(tmp_path):
    cfg = RunConfig(**{**MICRO, "val_per_class": 50}, base_lr=0.0, out_dir=str(tmp_path))
    result = train(cfg)
    start = build_net(cfg.model_config(), cfg.seed)
    assert result.params.equal(start)
    saved, _ = load_checkpoint(result.checkpoint)
    assert saved.equal(start)
    assert abs(result.val_top1 - 0.25) <= 0.1


def test_metrics_csv_format(tmp_path):
    result = train(RunConfig(**{**MICRO, "epochs": 2}, out_dir=str(tmp_path)))
    lines = result.metrics_path.read_text().splitlines()
    assert lines[0] == METRICS_HEADER == "epoch,lr,train_loss,val_top1"
    assert len(lines) == 3
    epoch, lr, loss, acc = lines[1].split(",")
    assert epoch == "1" and float(lr) > 0 and float(loss) > 0 and 0 <= float(acc) <= 1


def test_runs_are_bitwise_reproducible(tmp_path):
    cfg = RunConfig(**{**MICRO, "epochs": 2, "variant": "dtf"})
    a = train(replace(cfg, out_dir=str(tmp_path / "a")))
    b = train(replace(cfg, out_dir=str(tmp_path / "b")))
    assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    c = train(replace(cfg, seed=1, out_dir=str(tmp_path / "c")))
    assert c.checkpoint.read_bytes() != a.checkpoint.read_bytes()


def test_micro_run_loss_decreases():
    cfg = RunConfig(channels=(4, 8), blocks=(1, 1), variant="dtf", T=16, H=6, W=6,
                    train_per_class=8, val_per_class=2, epochs=5, base_lr=0.02)
    losses = [m[2] for m in train(cfg, write=False).metrics]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_evaluate_random_init_is_chance(tmp_path):
    cfg = RunConfig(**MICRO, base_lr=0.0, out_dir=str(tmp_path))
    ckpt = train(cfg).checkpoint
    acc = evaluate(ckpt, per_class=60, seed=99)
    assert abs(acc - 0.25) <= 0.1


def test_evaluate_memorization(tmp_path):
    cfg = RunConfig(channels=(4, 8), blocks=(1, 1), variant="dtf", variant_stages=(0,), T=8, H=5, W=5,
                    train_per_class=2, val_per_class=1, epochs=150, base_lr=0.1, out_dir=str(tmp_path))
    result = train(cfg)
    train_items, _ = splits(cfg)
    # far below the ln 4 plateau of an untrained classifier
    assert result.metrics[-1][2] < 0.2
    assert evaluate(result.checkpoint, items=train_items) == 1.0


def test_evaluate_truncated_checkpoint(tmp_path):
    ckpt = train(RunConfig(**MICRO, out_dir=str(tmp_path))).checkpoint
    ckpt.write_bytes(ckpt.read_bytes()[:100])
    with pytest.raises(CheckpointCorrupt):
        evaluate(ckpt)


def test_bench_uses_cache_and_formats_csv():
    base = RunConfig(**MICRO)
    cache = {(v, None, T, s): 0.25 + 0.5 * (v == "dtf") for v in ("dtf_1d", "dtf") for T in (8, 16) for s in (0, 1)}
    rows = bench(base, lengths=(8, 16), seeds=(0, 1), cache=cache)
    assert rows == [("dtf_1d", 1, 8, 0.25), ("dtf_1d", 1, 16, 0.25), ("dtf", 1, 8, 0.75), ("dtf", 1, 16, 0.75)]
    text = bench_csv(rows)
    assert text.splitlines()[0] == "variant,blocks,T,top1"
    assert text.splitlines()[1] == "dtf_1d,1,8,0.25"


def test_bench_trains_missing_entries():
    base = RunConfig(**MICRO)
    cache = {}
    rows = bench(base, variants=("dtf_1d",), lengths=(4,), seeds=(0,), cache=cache)
    assert list(cache) == [("dtf_1d", None, 4, 0)]
    assert rows[0][:3] == ("dtf_1d", 1, 4) and not math.isnan(rows[0][3])
