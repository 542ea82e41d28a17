"""Neural-network primitives on ``N x C x T x H x W`` feature maps.

Each op works on plain arrays or on :class:`~dtfnet.autograd.Var` inputs, in
which case it records its vector-Jacobian product on the tape.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autograd import Var, record, value_of
from .errors import LabelOutOfRange, ShapeMismatch

RMS_EPS = 1e-6


class ParamStore:
    """Named parameters with fixed shapes, iterated in sorted-name order."""

    def __init__(self, params: dict[str, np.ndarray] | None = None):
        self._params: dict[str, np.ndarray] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> None:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        self._params[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if name not in self._params:
            raise KeyError(f"unknown parameter {name!r}")
        if value.shape != self._params[name].shape:
            raise ShapeMismatch(f"{name}: shape {value.shape} != {self._params[name].shape}")
        self._params[name] = value.copy()

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._params))

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def copy(self) -> "ParamStore":
        return ParamStore({n: v.copy() for n, v in self.items()})

    def num_params(self) -> int:
        return int(np.sum([v.size for v in self._params.values()], dtype=np.int64))

    def equal(self, other: "ParamStore") -> bool:
        """Bitwise equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for (_, a), (_, b) in zip(self.items(), other.items())
        )


def _check_5d(kind: str, x: np.ndarray):
    if x.ndim != 5:
        raise ShapeMismatch(f"{kind}: expected N x C x T x H x W input, got {x.shape}")


def _needs_grad(x) -> bool:
    return isinstance(x, Var) and x.requires_grad


def _taps(xp: np.ndarray, Ho: int, Wo: int, stride: int) -> np.ndarray:
    """Stack the nine shifted 3x3 windows of a padded map along a new axis 2."""
    span_y = stride * (Ho - 1) + 1
    span_x = stride * (Wo - 1) + 1
    return np.stack(
        [xp[..., dy:dy + span_y:stride, dx:dx + span_x:stride] for dy in range(3) for dx in range(3)],
        axis=2,
    )


def conv2d_3x3(x, w, b, stride: int = 1):
    """Per-frame 3x3 cross-correlation with zero padding 1, plus bias."""
    xv, wv, bv = value_of(x), value_of(w), value_of(b)
    _check_5d("conv2d_3x3", xv)
    N, C, T, H, W = xv.shape
    if wv.shape[1:] != (C, 3, 3) or bv.shape != (wv.shape[0],):
        raise ShapeMismatch(f"conv2d_3x3: weight {wv.shape}, bias {bv.shape} for {C} channels")
    O = wv.shape[0]
    Ho = (H - 1) // stride + 1
    Wo = (W - 1) // stride + 1
    P = T * Ho * Wo
    xp = np.pad(xv, ((0, 0), (0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _taps(xp, Ho, Wo, stride).reshape(N, C * 9, P)
    w2 = wv.reshape(O, C * 9)
    out = (w2 @ cols).reshape(N, O, T, Ho, Wo) + bv[None, :, None, None, None]
    need_x = _needs_grad(x)

    def vjp(g):
        g2 = g.reshape(N, O, P)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(wv.shape)
        gb = g2.sum(axis=(0, 2))
        if not need_x:
            return None, gw, gb
        if stride == 1:
            # input gradient is the correlation of g with the flipped kernel
            gp = np.pad(g, ((0, 0), (0, 0), (0, 0), (1, 1), (1, 1)))
            gcols = _taps(gp, H, W, 1).reshape(N, O * 9, P)
            wf = wv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(C, O * 9)
            return (wf @ gcols).reshape(xv.shape), gw, gb
        gcols = (w2.T @ g2).reshape(N, C, 9, T, Ho, Wo)
        gxp = np.zeros_like(xp)
        for i in range(9):
            dy, dx = divmod(i, 3)
            gxp[..., dy:dy + stride * (Ho - 1) + 1:stride, dx:dx + stride * (Wo - 1) + 1:stride] += gcols[:, :, i]
        return gxp[..., 1:-1, 1:-1], gw, gb

    return record("conv2d", out, [x, w, b], vjp)


def conv1d_temporal(x, w, b):
    """Depthwise 3-tap temporal cross-correlation with zero padding 1."""
    xv, wv, bv = value_of(x), value_of(w), value_of(b)
    _check_5d("conv1d_temporal", xv)
    C = xv.shape[1]
    if wv.shape != (C, 3) or bv.shape != (C,):
        raise ShapeMismatch(f"conv1d_temporal: weight {wv.shape}, bias {bv.shape} for {C} channels")
    xp = np.pad(xv, ((0, 0), (0, 0), (1, 1), (0, 0), (0, 0)))
    T = xv.shape[2]
    shifted = [xp[:, :, j:j + T] for j in range(3)]
    out = bv[None, :, None, None, None] + sum(
        wv[None, :, j, None, None, None] * shifted[j] for j in range(3)
    )

    def vjp(g):
        gw = np.stack([(g * shifted[j]).sum(axis=(0, 2, 3, 4)) for j in range(3)], axis=1)
        gxp = np.zeros_like(xp)
        for j in range(3):
            gxp[:, :, j:j + T] += wv[None, :, j, None, None, None] * g
        return gxp[:, :, 1:-1], gw, g.sum(axis=(0, 2, 3, 4))

    return record("conv1d", out, [x, w, b], vjp)


def dynamic_conv1d(x, kernels):
    """3-tap temporal cross-correlation with a separate kernel per signal.

    ``x`` has shape ``(..., T)`` and ``kernels`` ``(..., 3)``; boundaries are
    zero padded.
    """
    xv, kv = value_of(x), value_of(kernels)
    if kv.shape != xv.shape[:-1] + (3,):
        raise ShapeMismatch(f"dynamic_conv1d: kernels {kv.shape} for signals {xv.shape}")
    T = xv.shape[-1]
    pad = [(0, 0)] * (xv.ndim - 1) + [(1, 1)]
    xp = np.pad(xv, pad)
    shifted = [xp[..., j:j + T] for j in range(3)]
    out = sum(kv[..., j:j + 1] * shifted[j] for j in range(3))

    def vjp(g):
        gk = np.stack([(g * shifted[j]).sum(axis=-1) for j in range(3)], axis=-1)
        gxp = np.zeros_like(xp)
        for j in range(3):
            gxp[..., j:j + T] += kv[..., j:j + 1] * g
        return gxp[..., 1:-1], gk

    return record("dynconv1d", out, [x, kernels], vjp)


def linear(x, w, b):
    xv, wv, bv = value_of(x), value_of(w), value_of(b)
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[1] or bv.shape != (wv.shape[0],):
        raise ShapeMismatch(f"linear: x {xv.shape}, w {wv.shape}, b {bv.shape}")
    out = xv @ wv.T + bv
    return record("linear", out, [x, w, b], lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)))


def rms_channel_norm(x, gain):
    """Scale each (sample, channel) map to unit root-mean-square, then by ``gain``."""
    xv, gv = value_of(x), value_of(gain)
    _check_5d("rms_channel_norm", xv)
    if gv.shape != (xv.shape[1],):
        raise ShapeMismatch(f"rms_channel_norm: gain {gv.shape} for {xv.shape[1]} channels")
    axes = (2, 3, 4)
    n = xv.shape[2] * xv.shape[3] * xv.shape[4]
    r = np.sqrt((xv * xv).mean(axis=axes, keepdims=True) + RMS_EPS)
    u = xv / r
    gk = gv[None, :, None, None, None]

    def vjp(g):
        gu = g * gk
        dot = (gu * xv).sum(axis=axes, keepdims=True)
        gx = gu / r - xv * dot / (n * r**3)
        return gx, (g * u).sum(axis=(0, 2, 3, 4))

    return record("rmsnorm", u * gk, [x, gain], vjp)


def global_avg_pool(x):
    """Mean over time and space: ``N x C x T x H x W -> N x C``."""
    xv = value_of(x)
    _check_5d("global_avg_pool", xv)
    n = xv.shape[2] * xv.shape[3] * xv.shape[4]

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None, None] / n, xv.shape).copy(),)

    return record("meanpool", xv.mean(axis=(2, 3, 4)), [x], vjp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    lv = value_of(logits)
    labels = np.asarray(labels, dtype=np.intp)
    N, K = lv.shape
    if labels.shape != (N,):
        raise ShapeMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {N} rows")
    if np.any(labels < 0) or np.any(labels >= K):
        raise LabelOutOfRange(f"labels must lie in [0, {K})")
    logp = log_softmax(lv)
    loss = -logp[np.arange(N), labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(N), labels] -= 1.0
        return (p * (float(g) / N),)

    return record("xent", np.asarray(loss), [logits], vjp)
