"""Training, evaluation and sweeps for the tiny network on synthetic clips."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autograd as ag
from . import defaults
from .data import ClipSpec, make_dataset, splitmix64, stack
from .errors import CheckpointCorrupt, ConfigError, InvalidConfig, OutOfRange
from .model import (
    ModelConfig,
    build_net,
    check_compatible,
    load_checkpoint,
    net_forward,
    save_checkpoint,
)
from .nn import ParamStore, softmax_cross_entropy

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,lr,train_loss,val_top1"
VAL_SEED_SALT = 0x5EED_0F_FA11


@dataclass(frozen=True)
class RunConfig:
    # model
    channels: tuple[int, ...] = defaults.CHANNELS
    blocks: tuple[int, ...] = (1, 1, 1)
    variant: str = "dtf"
    variant_stages: tuple[int, ...] | None = None
    k: int = defaults.NEIGHBORHOOD
    G: int = defaults.GROUP_FACTOR
    identity_init: bool = True
    # data
    T: int = defaults.CLIP_LENGTH
    H: int = defaults.FRAME_SIZE
    W: int = defaults.FRAME_SIZE
    in_channels: int = 1
    num_classes: int = defaults.NUM_CLASSES
    periods: tuple[float, ...] = defaults.PERIODS
    cycles: tuple[float, ...] | None = None
    sigma: float = defaults.NOISE_SIGMA
    blob_sigma: float = defaults.BLOB_SIGMA
    max_speed: float = defaults.MAX_SPEED
    train_per_class: int = 200
    val_per_class: int = 100
    # optimisation
    base_lr: float = defaults.BASE_LR
    epochs: int = defaults.EPOCHS
    batch_size: int = defaults.BATCH_SIZE
    momentum: float = defaults.MOMENTUM
    weight_decay: float = defaults.WEIGHT_DECAY
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        # lr = 0 is allowed so a run can be checked to leave parameters untouched
        if self.base_lr < 0:
            raise ConfigError("base_lr must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1 or self.train_per_class < 1 or self.val_per_class < 1:
            raise ConfigError("batch size and split sizes must be positive")
        try:
            self.model_config()
            self.clip_spec()
        except InvalidConfig as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            channels=self.channels,
            blocks=self.blocks,
            variant=self.variant,
            variant_stages=self.variant_stages,
            T=self.T,
            k=self.k,
            G=self.G,
            num_classes=self.num_classes,
            in_channels=self.in_channels,
            identity_init=self.identity_init,
        )

    def clip_spec(self, **overrides) -> ClipSpec:
        kw = dict(
            T=self.T,
            H=self.H,
            W=self.W,
            in_channels=self.in_channels,
            num_classes=self.num_classes,
            periods=self.periods,
            cycles=self.cycles,
            sigma=self.sigma,
            blob_sigma=self.blob_sigma,
            max_speed=self.max_speed,
        )
        kw.update(overrides)
        return ClipSpec(**kw)

    def to_items(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out[f.name] = "all"
            elif isinstance(v, tuple):
                out[f.name] = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                out[f.name] = repr(v)
            else:
                out[f.name] = str(v)
        return out

    @classmethod
    def from_items(cls, items: Mapping[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in items.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[name] = _parse_value(name, str(raw).strip())
        return cls(**kw)


_INT_TUPLES = {"channels", "blocks", "variant_stages"}
_INTS = {"k", "G", "T", "H", "W", "in_channels", "num_classes", "train_per_class",
         "val_per_class", "epochs", "batch_size", "seed"}
_FLOATS = {"sigma", "blob_sigma", "max_speed", "base_lr", "momentum", "weight_decay"}


def _parse_value(name: str, raw: str):
    try:
        if name in _INT_TUPLES:
            if name == "variant_stages" and raw.lower() in ("all", "none", ""):
                return None
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if name in ("periods", "cycles"):
            if name == "cycles" and raw.lower() in ("all", "none", ""):
                return None
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if name in _INTS:
            return int(raw)
        if name in _FLOATS:
            return float(raw)
        if name == "identity_init":
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("1", "true", "yes")
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    items = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def cosine_lr(step: int, total: int, base: float) -> float:
    if total < 1 or not 0 <= step <= total:
        raise OutOfRange(f"step {step} outside [0, {total}]")
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total))


def splits(cfg: RunConfig):
    """Deterministic (train, val) datasets for a run."""
    spec = cfg.clip_spec()
    train = make_dataset(spec, cfg.train_per_class, cfg.seed)
    val = make_dataset(spec, cfg.val_per_class, splitmix64(cfg.seed ^ VAL_SEED_SALT, 0))
    return train, val


def predict(params, clips: np.ndarray, cfg: ModelConfig, batch_size: int = 64) -> np.ndarray:
    """Argmax class per clip; ties go to the lowest class index."""
    preds = []
    for i in range(0, len(clips), batch_size):
        logits = net_forward(params, clips[i:i + batch_size], cfg)
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.intp)


def accuracy(params, clips, labels, cfg: ModelConfig, batch_size: int = 64) -> float:
    return float(np.mean(predict(params, clips, cfg, batch_size) == np.asarray(labels)))


@dataclass
class TrainResult:
    params: ParamStore
    metrics: list[tuple[int, float, float, float]] = field(default_factory=list)
    checkpoint: Path | None = None
    metrics_path: Path | None = None

    @property
    def val_top1(self) -> float:
        return self.metrics[-1][3]

    def metrics_csv(self) -> str:
        lines = [METRICS_HEADER]
        lines += [f"{e},{lr!r},{loss!r},{acc!r}" for e, lr, loss, acc in self.metrics]
        return "\n".join(lines) + "\n"


def train(cfg: RunConfig, write: bool = True, data=None) -> TrainResult:
    """Mini-batch SGD with momentum, L2 decay and a per-step cosine schedule.

    Writes ``metrics.csv`` and ``model.ckpt`` under ``cfg.out_dir`` when
    ``write`` is set. ``data`` may supply precomputed ``(train, val)`` splits.
    """
    mcfg = cfg.model_config()
    params = build_net(mcfg, cfg.seed)
    train_items, val_items = data if data is not None else splits(cfg)
    xtr, ytr = stack(train_items)
    xva, yva = stack(val_items)
    n = len(xtr)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    order_rng = np.random.default_rng(splitmix64(cfg.seed, 0xDA7A))
    velocity = {name: np.zeros_like(v) for name, v in params.items()}
    result = TrainResult(params)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(n)
        losses = []
        lr = cosine_lr(step, total, cfg.base_lr)
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            lr = cosine_lr(step, total, cfg.base_lr)
            tape = ag.Tape()
            pv = {name: tape.var(v) for name, v in params.items()}
            loss = softmax_cross_entropy(net_forward(pv, xtr[idx], mcfg), ytr[idx])
            grads = ag.backward(loss)
            for name, var in pv.items():
                g = grads[var.id] + cfg.weight_decay * params[name]
                velocity[name] = cfg.momentum * velocity[name] + g
                params[name] = params[name] - lr * velocity[name]
            losses.append(float(loss.value) * len(idx))
            step += 1
        train_loss = float(np.sum(losses) / n)
        val = accuracy(params, xva, yva, mcfg)
        result.metrics.append((epoch, lr, train_loss, val))
        log.info("epoch %d lr %.5f loss %.4f val %.3f", epoch, lr, train_loss, val)
    if write:
        out = Path(cfg.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            result.metrics_path = out / "metrics.csv"
            result.metrics_path.write_text(result.metrics_csv(), encoding="utf-8")
            # the echo leaves out where the run was written, so identical runs
            # give identical checkpoints wherever they land
            echo = {k: v for k, v in cfg.to_items().items() if k != "out_dir"}
            result.checkpoint = save_checkpoint(out / "model.ckpt", params, echo)
        except OSError as exc:
            raise IOError(f"cannot write run outputs to {out}: {exc}") from exc
    return result


def load_run(path) -> tuple[ParamStore, RunConfig]:
    params, items = load_checkpoint(path)
    try:
        cfg = RunConfig.from_items(items)
    except (ConfigError, TypeError) as exc:
        raise CheckpointCorrupt(f"checkpoint config echo is unusable: {exc}") from exc
    check_compatible(params, cfg.model_config())
    return params, cfg


def evaluate(checkpoint, items=None, per_class: int | None = None, seed: int | None = None) -> float:
    """Top-1 accuracy of a saved model.

    Evaluates on ``items`` when given, otherwise on a freshly generated split
    (``per_class`` clips per class, default the run's validation split).
    """
    params, cfg = load_run(checkpoint)
    if items is None:
        spec = cfg.clip_spec()
        if per_class is None and seed is None:
            _, items = splits(cfg)
        else:
            items = make_dataset(spec, per_class or cfg.val_per_class, cfg.seed if seed is None else seed)
    clips, labels = stack(items)
    return accuracy(params, clips, labels, cfg.model_config())


def bench(base: RunConfig, variants=("dtf_1d", "dtf"), blocks=(None,), lengths=(8, 16, 32),
          seeds=(0, 1, 2), cache: dict | None = None) -> list[tuple[str, int, int, float]]:
    """Seed-averaged top-1 for every (variant, temporal-block count, T) combination.

    ``blocks`` entries count how many stages (from the first) carry the
    variant; ``None`` keeps ``base.variant_stages``. ``cache`` maps
    ``(variant, stages, T, seed)`` to accuracy and is filled as runs finish.
    """
    cache = {} if cache is None else cache
    rows = []
    for variant in variants:
        for nb in blocks:
            stages = base.variant_stages if nb is None else tuple(range(nb))
            for T in lengths:
                accs = []
                for seed in seeds:
                    key = (variant, stages, T, seed)
                    if key not in cache:
                        cfg = replace(base, variant=variant, variant_stages=stages, T=T, seed=seed)
                        cache[key] = train(cfg, write=False).val_top1
                    accs.append(cache[key])
                n_blocks = len(stages if stages is not None else base.channels)
                rows.append((variant, n_blocks, T, float(np.mean(accs))))
    return rows


def bench_csv(rows) -> str:
    lines = ["variant,blocks,T,top1"] + [f"{v},{b},{t},{acc!r}" for v, b, t, acc in rows]
    return "\n".join(lines) + "\n"
