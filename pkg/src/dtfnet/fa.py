"""Frame-wise aggregation: inter-frame attention over a k x k neighbourhood.

For every location ``(x, y)`` of frame ``t`` the C-vector there is the query;
the keys are the C-vectors of frame ``t + 1`` inside the ``k x k`` window
centred on ``(x, y)``. Scores ``q.k / sqrt(C)`` are softmax-normalised over the
in-bounds window positions, the weighted keys are summed and added back to the
query. The last frame has no successor: its aggregate is zero and its weights
are uniform over the in-bounds positions.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import record, value_of
from .errors import EvenKernel, ShapeMismatch


def window_offsets(k: int) -> list[tuple[int, int]]:
    r = k // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]


def neighborhood_mask(H: int, W: int, k: int) -> np.ndarray:
    """Boolean ``(k*k, H, W)`` array, True where the window position is in-bounds."""
    ys = np.arange(H)[:, None]
    xs = np.arange(W)[None, :]
    return np.stack(
        [(ys + dy >= 0) & (ys + dy < H) & (xs + dx >= 0) & (xs + dx < W) for dy, dx in window_offsets(k)]
    )


def _check_kernel(k: int):
    if k < 1 or k % 2 == 0:
        raise EvenKernel(f"neighbourhood size must be a positive odd integer, got {k}")


def gather_neighborhood(F, k: int):
    """Keys from the next frame: ``N x C x T x H x W -> N x C x k*k x T x H x W``.

    Entry ``[n, c, j, t, y, x]`` is ``F[n, c, t+1, y+dy_j, x+dx_j]``, or 0 when
    that position is outside the frame or ``t`` is the last frame.
    """
    Fv = value_of(F)
    _check_kernel(k)
    if Fv.ndim != 5:
        raise ShapeMismatch(f"expected N x C x T x H x W, got {Fv.shape}")
    N, C, T, H, W = Fv.shape
    r = k // 2
    offsets = window_offsets(k)
    padded = np.zeros((N, C, T, H + 2 * r, W + 2 * r))
    padded[:, :, : T - 1, r:r + H, r:r + W] = Fv[:, :, 1:]
    out = np.stack(
        [padded[..., r + dy:r + dy + H, r + dx:r + dx + W] for dy, dx in offsets], axis=2
    )

    def vjp(g):
        gp = np.zeros_like(padded)
        for j, (dy, dx) in enumerate(offsets):
            gp[..., r + dy:r + dy + H, r + dx:r + dx + W] += g[:, :, j]
        gF = np.zeros_like(Fv)
        gF[:, :, 1:] = gp[:, :, : T - 1, r:r + H, r:r + W]
        return (gF,)

    return record("gather", out, [F], vjp)


def window_scores(Q, keys):
    """Dot product of each query with its window keys: ``-> N x k^2 x T x H x W``."""
    qv, kv = value_of(Q), value_of(keys)
    if kv.shape[:2] + kv.shape[3:] != qv.shape:
        raise ShapeMismatch(f"keys {kv.shape} do not match queries {qv.shape}")
    out = (qv[:, :, None] * kv).sum(axis=1)

    def vjp(g):
        return (g[:, None] * kv).sum(axis=2), g[:, None] * qv[:, :, None]

    return record("window_scores", out, [Q, keys], vjp)


def window_mix(weights, keys):
    """Weighted sum of window keys: ``-> N x C x T x H x W``."""
    wv, kv = value_of(weights), value_of(keys)
    if wv.shape != kv.shape[:1] + kv.shape[2:]:
        raise ShapeMismatch(f"weights {wv.shape} do not match keys {kv.shape}")
    out = (wv[:, None] * kv).sum(axis=2)

    def vjp(g):
        return (g[:, :, None] * kv).sum(axis=1), g[:, :, None] * wv[:, None]

    return record("window_mix", out, [weights, keys], vjp)


def frame_aggregate(F, k: int = 3):
    """Return ``(F_enh, F_cor)`` with shapes ``N x C x T x H x W`` and ``N x k^2 x T x H x W``."""
    Fv = value_of(F)
    _check_kernel(k)
    if Fv.ndim != 5:
        raise ShapeMismatch(f"expected N x C x T x H x W, got {Fv.shape}")
    N, C, T, H, W = Fv.shape
    keys = gather_neighborhood(F, k)
    scores = ag.scale(window_scores(F, keys), 1.0 / np.sqrt(C))
    mask = neighborhood_mask(H, W, k)[None, :, None, :, :]
    weights = ag.softmax(scores, axis=1, mask=mask)
    return ag.add(F, window_mix(weights, keys)), weights
