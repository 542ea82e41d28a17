"""Synthetic clips whose class is only visible through long-range temporal structure.

Each clip shows one Gaussian blob drifting along a straight line. Its
brightness oscillates as ``0.5 * (1 + sin(2*pi*t/p + phase))`` where the period
``p`` is set by the class and the phase is random, so single frames carry no
class information. Gaussian pixel noise is added and values are clipped to
``[-1, 2]``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import defaults
from .errors import CheckpointCorrupt, InvalidClass, InvalidConfig

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(seed: int, counter: int) -> int:
    """Seed for item ``counter`` of a stream started from ``seed``.

    The state is ``seed + (counter + 1) * 0x9E3779B97F4A7C15`` (mod 2**64),
    passed through the SplitMix64 finaliser.
    """
    z = (seed + (counter + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class ClipSpec:
    T: int = defaults.CLIP_LENGTH
    H: int = defaults.FRAME_SIZE
    W: int = defaults.FRAME_SIZE
    in_channels: int = 1
    num_classes: int = defaults.NUM_CLASSES
    periods: tuple[float, ...] = defaults.PERIODS
    # oscillations per clip for each class; when set, the period of class c
    # is T / cycles[c] and ``periods`` is ignored
    cycles: tuple[float, ...] | None = None
    sigma: float = defaults.NOISE_SIGMA
    blob_sigma: float = defaults.BLOB_SIGMA
    max_speed: float = defaults.MAX_SPEED

    def __post_init__(self):
        periods = self.periods
        if isinstance(periods, str):
            periods = [float(p) for p in periods.split(",") if p.strip()]
        object.__setattr__(self, "periods", tuple(float(p) for p in periods))
        if self.T < 1 or self.H < 1 or self.W < 1 or self.in_channels < 1:
            raise InvalidConfig("clip extents must be positive")
        if self.cycles is not None:
            cycles = self.cycles
            if isinstance(cycles, str):
                cycles = [float(c) for c in cycles.split(",") if c.strip()]
            object.__setattr__(self, "cycles", tuple(float(c) for c in cycles))
            if len(self.cycles) != self.num_classes:
                raise InvalidConfig(f"{self.num_classes} classes need {self.num_classes} cycle counts")
            if len(set(self.cycles)) != len(self.cycles):
                raise InvalidConfig("class cycle counts must be pairwise distinct")
            if min(self.cycles) <= 0 or max(self.cycles) > self.T / 2:
                raise InvalidConfig(f"cycle counts must lie in (0, T/2] = (0, {self.T / 2}]")
        else:
            if len(self.periods) != self.num_classes:
                raise InvalidConfig(f"{self.num_classes} classes need {self.num_classes} periods")
            if len(set(self.periods)) != len(self.periods):
                raise InvalidConfig("class periods must be pairwise distinct")
            if min(self.periods) < 4:
                raise InvalidConfig("class periods must be at least 4 frames")
        if self.sigma < 0 or self.blob_sigma <= 0 or self.max_speed < 0:
            raise InvalidConfig("noise, blob width and speed must be non-negative")

    def period(self, cls: int) -> float:
        if self.cycles is not None:
            return self.T / self.cycles[cls]
        return self.periods[cls]

    def to_items(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("periods", "cycles"):
                out[f.name] = "none" if v is None else ",".join(repr(p) for p in v)
            else:
                out[f.name] = repr(v)
        return out

    @classmethod
    def from_items(cls, items: Mapping[str, str]) -> "ClipSpec":
        kw = {}
        for f in fields(cls):
            if f.name in items:
                v = items[f.name]
                if f.name == "periods":
                    kw[f.name] = v
                elif f.name == "cycles":
                    kw[f.name] = None if v in ("none", "None", "") else v
                elif f.name in ("T", "H", "W", "in_channels", "num_classes"):
                    kw[f.name] = int(v)
                else:
                    kw[f.name] = float(v)
        return cls(**kw)


def _trajectory(spec: ClipSpec, rng: np.random.Generator) -> np.ndarray:
    """Blob centre ``(y, x)`` for every frame, kept inside the frame."""
    margin = np.array([min(spec.blob_sigma, (spec.H - 1) / 2), min(spec.blob_sigma, (spec.W - 1) / 2)])
    hi = np.array([spec.H - 1, spec.W - 1]) - margin
    centre = rng.uniform(margin, hi)
    angle = rng.uniform(0.0, 2 * np.pi)
    speed = rng.uniform(0.0, spec.max_speed)
    direction = np.array([np.sin(angle), np.cos(angle)])
    half = (spec.T - 1) / 2
    if half > 0 and speed > 0:
        # largest speed keeping both ends of the path inside [margin, hi]
        room = np.minimum(centre - margin, hi - centre)
        with np.errstate(divide="ignore"):
            limit = np.where(np.abs(direction) > 1e-12, room / (np.abs(direction) * half), np.inf)
        speed = min(speed, float(limit.min()))
    t = np.arange(spec.T) - half
    return centre[None, :] + speed * t[:, None] * direction[None, :]


def generate_clip(spec: ClipSpec, cls: int, seed: int) -> tuple[np.ndarray, int]:
    """One ``C_in x T x H x W`` clip of class ``cls``; a pure function of its arguments."""
    if not 0 <= cls < spec.num_classes:
        raise InvalidClass(f"class {cls} outside [0, {spec.num_classes})")
    rng = np.random.default_rng(seed)
    path = _trajectory(spec, rng)
    phase = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(spec.T)
    amplitude = 0.5 * (1.0 + np.sin(2 * np.pi * t / spec.period(cls) + phase))
    ys = np.arange(spec.H)[None, :, None]
    xs = np.arange(spec.W)[None, None, :]
    d2 = (ys - path[:, 0, None, None]) ** 2 + (xs - path[:, 1, None, None]) ** 2
    frames = amplitude[:, None, None] * np.exp(-d2 / (2 * spec.blob_sigma**2))
    clip = np.repeat(frames[None], spec.in_channels, axis=0)
    if spec.sigma > 0:
        clip = clip + rng.normal(0.0, spec.sigma, size=clip.shape)
    return np.clip(clip, -1.0, 2.0), cls


def make_dataset(spec: ClipSpec, n_per_class: int, seed: int) -> list[tuple[np.ndarray, int]]:
    """``n_per_class`` clips of every class, class-major; item ``i`` uses ``splitmix64(seed, i)``."""
    if n_per_class < 1:
        raise InvalidConfig("need at least one clip per class")
    items = []
    i = 0
    for cls in range(spec.num_classes):
        for _ in range(n_per_class):
            items.append(generate_clip(spec, cls, splitmix64(seed, i)))
            i += 1
    return items


def stack(items) -> tuple[np.ndarray, np.ndarray]:
    """Batch arrays ``(N x C_in x T x H x W, N)`` from ``(clip, label)`` pairs."""
    clips = np.stack([c for c, _ in items])
    labels = np.array([y for _, y in items], dtype=np.intp)
    return clips, labels


# dataset cache: b"DTFD" | u32 version | u32 len + UTF-8 spec echo | u32 count |
# per item: i32 label | float64 LE frames (C_in*T*H*W values)
DATA_MAGIC = b"DTFD"
DATA_VERSION = 1


def save_dataset(path, spec: ClipSpec, items) -> Path:
    path = Path(path)
    echo = "".join(f"{k}={v}\n" for k, v in spec.to_items().items()).encode("utf-8")
    parts = [DATA_MAGIC, struct.pack("<II", DATA_VERSION, len(echo)), echo, struct.pack("<I", len(items))]
    for clip, label in items:
        parts.append(struct.pack("<i", label))
        parts.append(np.ascontiguousarray(clip, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))
    return path


def load_dataset(path) -> tuple[ClipSpec, list[tuple[np.ndarray, int]]]:
    data = Path(path).read_bytes()
    if data[:4] != DATA_MAGIC:
        raise CheckpointCorrupt("not a dataset file")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != DATA_VERSION:
            raise CheckpointCorrupt(f"unsupported dataset version {version}")
        pos = 12 + n
        lines = data[12:pos].decode("utf-8").splitlines()
        spec = ClipSpec.from_items(dict(line.split("=", 1) for line in lines))
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = (spec.in_channels, spec.T, spec.H, spec.W)
        size = int(np.prod(shape)) * 8
        items = []
        for _ in range(count):
            (label,) = struct.unpack_from("<i", data, pos)
            pos += 4
            if pos + size > len(data):
                raise CheckpointCorrupt("dataset file is truncated")
            clip = np.frombuffer(data, dtype="<f8", count=size // 8, offset=pos).reshape(shape).astype(np.float64)
            pos += size
            items.append((clip, label))
    except struct.error as exc:
        raise CheckpointCorrupt("dataset file is truncated") from exc
    return spec, items
