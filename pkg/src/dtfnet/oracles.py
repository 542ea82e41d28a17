"""Slow reference implementations written as explicit loops.

They exist only to cross-check the vectorized ops and are far too slow for
anything but tiny shapes.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_3x3_loop(x, w, b, stride: int = 1) -> np.ndarray:
    N, C, T, H, W = x.shape
    O = w.shape[0]
    Ho, Wo = (H - 1) // stride + 1, (W - 1) // stride + 1
    out = np.zeros((N, O, T, Ho, Wo))
    for n in range(N):
        for o in range(O):
            for t in range(T):
                for i in range(Ho):
                    for j in range(Wo):
                        acc = b[o]
                        for c in range(C):
                            for dy in range(3):
                                for dx in range(3):
                                    y, xx = i * stride + dy - 1, j * stride + dx - 1
                                    if 0 <= y < H and 0 <= xx < W:
                                        acc += w[o, c, dy, dx] * x[n, c, t, y, xx]
                        out[n, o, t, i, j] = acc
    return out


def conv1d_temporal_loop(x, w, b) -> np.ndarray:
    N, C, T, H, W = x.shape
    out = np.zeros_like(x)
    for n in range(N):
        for c in range(C):
            for t in range(T):
                for j in range(3):
                    s = t + j - 1
                    if 0 <= s < T:
                        out[n, c, t] += w[c, j] * x[n, c, s]
                out[n, c, t] += b[c]
    return out


def frame_aggregate_loop(F, k: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Per-location attention over the next frame's window, one location at a time."""
    N, C, T, H, W = F.shape
    r = k // 2
    enh = F.copy()
    weights = np.zeros((N, k * k, T, H, W))
    for n in range(N):
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    q = F[n, :, t, y, x]
                    slots, keys = [], []
                    j = 0
                    for dy in range(-r, r + 1):
                        for dx in range(-r, r + 1):
                            yy, xx = y + dy, x + dx
                            if 0 <= yy < H and 0 <= xx < W:
                                key = F[n, :, t + 1, yy, xx] if t + 1 < T else np.zeros(C)
                                slots.append(j)
                                keys.append(key)
                            j += 1
                    scores = [float(q @ key) / math.sqrt(C) for key in keys]
                    m = max(scores)
                    e = [math.exp(s - m) for s in scores]
                    z = sum(e)
                    for slot, key, ei in zip(slots, keys, e):
                        weights[n, slot, t, y, x] = ei / z
                        enh[n, :, t, y, x] += (ei / z) * key
    return enh, weights


def temporal_filter_loop(f, S_c) -> np.ndarray:
    """``f + IDFT(DFT(f) * S_c)`` for one ``C x T`` signal, with explicit sums."""
    C, T = f.shape
    M = S_c.shape[-1]
    out = f.copy()
    for c in range(C):
        spec = [sum(f[c, t] * complex(math.cos(2 * math.pi * k * t / T), -math.sin(2 * math.pi * k * t / T))
                    for t in range(T)) for k in range(M)]
        full = [0j] * T
        for k in range(M):
            full[k] = spec[k] * S_c[c, k]
        for k in range(M, T):
            full[k] = (spec[T - k] * S_c[c, T - k]).conjugate()
        full[0] = complex(full[0].real, 0.0)
        if T % 2 == 0:
            full[T // 2] = complex(full[T // 2].real, 0.0)
        for t in range(T):
            acc = sum(full[k] * complex(math.cos(2 * math.pi * k * t / T), math.sin(2 * math.pi * k * t / T))
                      for k in range(T))
            out[c, t] += acc.real / T
    return out
