"""A tiny residual video network hosting one temporal-modelling variant per block.

Layout: stem conv, then stages of residual blocks, strided 3x3 convs between
stages, global average pooling and a linear head. Each block computes
``y = x + temporal(relu(norm(conv3x3(x))))`` where ``temporal`` depends on the
variant:

``none``         identity (a purely 2D network)
``dtf_1d``       fixed depthwise 3-tap temporal convolution
``dtf_1d_plus``  3-tap temporal kernel predicted per location
``dtf_f``        learnable, input-independent frequency filter with residual
``dtf``          frame-wise aggregation followed by dynamic frequency filtering
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autograd as ag
from . import fft
from .autograd import value_of
from .dtf import apply_filters, dtf_mechanism_forward, init_estimator, predict_filters
from .errors import CheckpointCorrupt, InvalidConfig, ShapeMismatch
from .fa import frame_aggregate
from .nn import (
    ParamStore,
    conv1d_temporal,
    conv2d_3x3,
    dynamic_conv1d,
    global_avg_pool,
    linear,
    rms_channel_norm,
)

VARIANTS = ("none", "dtf_1d", "dtf_1d_plus", "dtf_f", "dtf")

# spread of the static filter around its initial value; an exactly flat
# filter treats every frequency alike and training starts at a saddle
FILTER_INIT_STD = 0.3


def _ints(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple[int, ...] = (16, 32, 64)
    blocks: tuple[int, ...] = (1, 1, 1)
    variant: str = "dtf"
    variant_stages: tuple[int, ...] | None = None  # None means every stage
    T: int = 16
    k: int = 3
    G: int = 16
    num_classes: int = 4
    in_channels: int = 1
    identity_init: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", _ints(self.channels))
        object.__setattr__(self, "blocks", _ints(self.blocks))
        if self.variant_stages is not None:
            object.__setattr__(self, "variant_stages", _ints(self.variant_stages))
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not self.channels or len(self.channels) != len(self.blocks):
            raise InvalidConfig("channels and blocks must name the same, non-empty set of stages")
        if any(c < 1 for c in self.channels) or any(b < 0 for b in self.blocks):
            raise InvalidConfig("stage channels must be positive and block counts non-negative")
        if self.k < 1 or self.k % 2 == 0:
            raise InvalidConfig(f"k must be odd, got {self.k}")
        if self.T < 1 or self.num_classes < 1 or self.in_channels < 1 or self.G < 1:
            raise InvalidConfig("T, num_classes, in_channels and G must be positive")
        for s in self.temporal_stages():
            if not 0 <= s < len(self.channels):
                raise InvalidConfig(f"variant stage {s} does not exist")
        for c in self.channels:
            if c % self.group_factor(c):
                raise InvalidConfig(f"group factor {self.group_factor(c)} does not divide {c} channels")

    def group_factor(self, channels: int) -> int:
        return min(self.G, channels)

    def temporal_stages(self) -> tuple[int, ...]:
        if self.variant_stages is None:
            return tuple(range(len(self.channels)))
        return self.variant_stages

    def block_variants(self) -> list[tuple[int, int, str]]:
        """``(block index, stage, variant)`` for every residual block in order."""
        out, i = [], 0
        temporal = set(self.temporal_stages())
        for s, n in enumerate(self.blocks):
            for _ in range(n):
                out.append((i, s, self.variant if s in temporal else "none"))
                i += 1
        return out

    def to_items(self) -> dict[str, str]:
        items = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "all"
            items[f.name] = str(v)
        return items

    @classmethod
    def from_items(cls, items: Mapping[str, str]) -> "ModelConfig":
        kw = {}
        for f in fields(cls):
            if f.name not in items:
                continue
            v = items[f.name]
            if f.name in ("channels", "blocks"):
                kw[f.name] = _ints(v)
            elif f.name == "variant_stages":
                kw[f.name] = None if str(v) in ("all", "None", "") else _ints(v)
            elif f.name == "variant":
                kw[f.name] = str(v)
            elif f.name == "identity_init":
                kw[f.name] = str(v).lower() in ("1", "true", "yes")
            else:
                kw[f.name] = int(v)
        return cls(**kw)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _add_conv(store: ParamStore, rng, prefix: str, c_in: int, c_out: int):
    fan_in = c_in * 9
    store.add(f"{prefix}.conv.weight", _uniform(rng, (c_out, c_in, 3, 3), fan_in))
    store.add(f"{prefix}.conv.bias", _uniform(rng, (c_out,), fan_in))
    store.add(f"{prefix}.norm.weight", np.ones(c_out))


def _add_temporal(store: ParamStore, rng, cfg: ModelConfig, prefix: str, variant: str, C: int):
    G = cfg.group_factor(C)
    M = fft.spectrum_size(cfg.T)
    if variant == "dtf_1d":
        store.add(f"{prefix}.temporal.weight", _uniform(rng, (C, 3), 3))
        store.add(f"{prefix}.temporal.bias", _uniform(rng, (C,), 3))
    elif variant == "dtf_1d_plus":
        rows = C // G
        store.add(f"{prefix}.estimator.weight", rng.normal(0.0, 1e-3, size=(rows * 3, C * cfg.T)))
        bias = np.zeros((rows, 3))
        bias[:, 1] = 1.0  # start as the identity kernel
        store.add(f"{prefix}.estimator.bias", bias.ravel())
    elif variant == "dtf_f":
        filt = FILTER_INIT_STD * rng.normal(size=(C, M, 2))
        if cfg.identity_init:
            filt[..., 0] += 1.0
        store.add(f"{prefix}.filter.weight", filt)
    elif variant == "dtf":
        weight, bias = init_estimator(C, G, cfg.T, cfg.k, rng, cfg.identity_init)
        store.add(f"{prefix}.estimator.weight", weight)
        store.add(f"{prefix}.estimator.bias", bias)


def build_net(cfg: ModelConfig, seed: int) -> ParamStore:
    """Deterministically initialised parameters for ``cfg``."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    _add_conv(store, rng, "stem", cfg.in_channels, cfg.channels[0])
    for s in range(1, len(cfg.channels)):
        _add_conv(store, rng, f"down{s}", cfg.channels[s - 1], cfg.channels[s])
    for i, s, variant in cfg.block_variants():
        C = cfg.channels[s]
        _add_conv(store, rng, f"block{i}", C, C)
        _add_temporal(store, rng, cfg, f"block{i}", variant, C)
    C = cfg.channels[-1]
    store.add("head.weight", _uniform(rng, (cfg.num_classes, C), C))
    store.add("head.bias", _uniform(rng, (cfg.num_classes,), C))
    return store


def _conv_norm_relu(x, params, prefix, stride=1):
    h = conv2d_3x3(x, params[f"{prefix}.conv.weight"], params[f"{prefix}.conv.bias"], stride=stride)
    return ag.relu(rms_channel_norm(h, params[f"{prefix}.norm.weight"]))


def temporal_op(h, params, prefix: str, variant: str, cfg: ModelConfig):
    """Apply the variant's temporal modelling to ``N x C x T x H x W`` features."""
    if variant == "none":
        return h
    N, C, T, H, W = value_of(h).shape
    if T != cfg.T:
        raise ShapeMismatch(f"clip has {T} frames, model was built for {cfg.T}")
    G = cfg.group_factor(C)
    if variant == "dtf_1d":
        return conv1d_temporal(h, params[f"{prefix}.temporal.weight"], params[f"{prefix}.temporal.bias"])
    if variant == "dtf_1d_plus":
        f = ag.permute(h, (0, 3, 4, 1, 2))  # N H W C T
        z = ag.reshape(f, (N * H * W, C * T))
        kern = linear(z, params[f"{prefix}.estimator.weight"], params[f"{prefix}.estimator.bias"])
        kern = ag.repeat(ag.reshape(kern, (N, H, W, C // G, 3)), G, axis=3)
        return ag.permute(dynamic_conv1d(f, kern), (0, 3, 4, 1, 2))
    if variant == "dtf_f":
        filt = ag.reshape(params[f"{prefix}.filter.weight"], (1, 1, 1, C, fft.spectrum_size(T), 2))
        filt = ag.broadcast_to(filt, (N, H, W, C, fft.spectrum_size(T), 2))
        return apply_filters(h, filt)
    if variant == "dtf":
        enh, cor = frame_aggregate(h, cfg.k)
        return dtf_mechanism_forward(
            enh, cor, params[f"{prefix}.estimator.weight"], params[f"{prefix}.estimator.bias"], G
        )
    raise InvalidConfig(f"unknown variant {variant!r}")


def block_forward(x, params, prefix: str, variant: str, cfg: ModelConfig):
    if value_of(x).ndim != 5:
        raise ShapeMismatch(f"expected N x C x T x H x W, got {value_of(x).shape}")
    path = temporal_op(_conv_norm_relu(x, params, prefix), params, prefix, variant, cfg)
    return ag.add(x, path)


def features(params, clip, cfg: ModelConfig):
    """Pooled clip-level features ``N x C_last``."""
    cv = value_of(clip)
    if cv.ndim != 5 or cv.shape[1] != cfg.in_channels or cv.shape[2] != cfg.T:
        raise ShapeMismatch(
            f"clip {cv.shape} does not match N x {cfg.in_channels} x {cfg.T} x H x W"
        )
    h = _conv_norm_relu(clip, params, "stem")
    stage_of = {}
    for i, s, variant in cfg.block_variants():
        stage_of.setdefault(s, []).append((i, variant))
    for s in range(len(cfg.channels)):
        if s > 0:
            h = _conv_norm_relu(h, params, f"down{s}", stride=2)
        for i, variant in stage_of.get(s, []):
            h = block_forward(h, params, f"block{i}", variant, cfg)
    return global_avg_pool(h)


def dynamic_filter_maps(params, clip, cfg: ModelConfig) -> dict[int, np.ndarray]:
    """Predicted filters of every ``dtf`` block, keyed by block index.

    Each map has shape ``(N, H', W', C, M, 2)`` at that block's resolution.
    """
    maps = {}
    h = _conv_norm_relu(value_of(clip), params, "stem")
    for s in range(len(cfg.channels)):
        if s > 0:
            h = _conv_norm_relu(h, params, f"down{s}", stride=2)
        for i, stage, variant in cfg.block_variants():
            if stage != s:
                continue
            if variant == "dtf":
                path = _conv_norm_relu(h, params, f"block{i}")
                enh, cor = frame_aggregate(path, cfg.k)
                maps[i] = predict_filters(
                    enh, cor, params[f"block{i}.estimator.weight"], params[f"block{i}.estimator.bias"],
                    cfg.group_factor(cfg.channels[s]),
                )
            h = block_forward(h, params, f"block{i}", variant, cfg)
    return maps


def net_forward(params, clip, cfg: ModelConfig):
    """Logits ``N x num_classes`` for a batch of clips ``N x C_in x T x H x W``."""
    return linear(features(params, clip, cfg), params["head.weight"], params["head.bias"])


def count_flops(cfg: ModelConfig, H: int, W: int) -> int:
    """Rough multiply-add count for one clip; not calibrated against any host network."""
    T, k = cfg.T, cfg.k
    M = fft.spectrum_size(T)
    total = 0
    h, w = H, W
    total += T * h * w * cfg.channels[0] * cfg.in_channels * 9
    variants = cfg.block_variants()
    for s, C in enumerate(cfg.channels):
        if s > 0:
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
            total += T * h * w * C * cfg.channels[s - 1] * 9
        for _, stage, variant in variants:
            if stage != s:
                continue
            loc = h * w
            total += T * loc * C * C * 9
            fft_cost = int(C * T * max(1, math.log2(T)) * 2)
            rows = C // cfg.group_factor(C)
            if variant == "dtf_1d":
                total += loc * C * T * 3
            elif variant == "dtf_1d_plus":
                total += loc * (C * T * rows * 3 + C * T * 3)
            elif variant == "dtf_f":
                total += loc * (fft_cost + C * M * 4)
            elif variant == "dtf":
                total += loc * (2 * C * T * k * k)
                total += loc * ((C + k * k) * T * 2 * rows * M + fft_cost + C * M * 4)
    total += cfg.channels[-1] * cfg.num_classes
    return total


# ---------------------------------------------------------------------------
# checkpoint files
#
# magic b"DTF1" | u32 version | u32 len + UTF-8 "key=value" lines | u32 count |
# per parameter: u32 len + UTF-8 name | u32 ndim | u64 dims... | float64 LE data

MAGIC = b"DTF1"
VERSION = 1


def save_checkpoint(path, params: ParamStore, config: Mapping[str, str]) -> Path:
    path = Path(path)
    echo = "".join(f"{k}={v}\n" for k, v in config.items()).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(echo)), echo, struct.pack("<I", len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", value.ndim) + struct.pack(f"<{value.ndim}Q", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointCorrupt("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[ParamStore, dict[str, str]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointCorrupt(f"cannot read checkpoint: {exc}") from exc
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointCorrupt("bad magic")
    version, echo_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointCorrupt(f"unsupported checkpoint version {version}")
    try:
        lines = r.take(echo_len).decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CheckpointCorrupt("config echo is not UTF-8") from exc
    config = dict(line.split("=", 1) for line in lines if "=" in line)
    (count,) = r.unpack("<I")
    store = ParamStore()
    for _ in range(count):
        (n,) = r.unpack("<I")
        name = r.take(n).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        size = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        store.add(name, value)
    if r.pos != len(data):
        raise CheckpointCorrupt("trailing bytes after parameters")
    return store, config


def check_compatible(params: ParamStore, cfg: ModelConfig) -> None:
    """Raise :class:`CheckpointCorrupt` unless ``params`` fit ``cfg`` exactly."""
    expected = build_net(cfg, 0)
    if expected.names() != params.names():
        raise CheckpointCorrupt("parameter names do not match the configuration")
    for name, value in expected.items():
        if params[name].shape != value.shape:
            raise CheckpointCorrupt(f"{name}: shape {params[name].shape} != {value.shape}")
