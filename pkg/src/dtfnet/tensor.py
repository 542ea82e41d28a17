"""Dense float64 arrays.

A tensor here is a C-contiguous ``numpy.ndarray`` of dtype float64. The helpers
below validate shapes the way the rest of the package expects and always hand
back fresh row-major storage.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

import numpy as np

from .errors import InvalidPermutation, NonFiniteValue, ShapeMismatch

DEBUG = os.environ.get("DTFNET_DEBUG", "") not in ("", "0")


def tensor_create(shape: Sequence[int], data) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeMismatch(f"negative extent in {shape}")
    flat = np.array(data, dtype=np.float64).ravel()
    if flat.size != math.prod(shape):
        raise ShapeMismatch(f"{flat.size} values cannot fill shape {shape}")
    return flat.reshape(shape).copy()


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.shape} x {b.shape}")
    return np.ascontiguousarray(a @ b, dtype=np.float64)


def permute(t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(t.ndim)):
        raise InvalidPermutation(f"{axes} is not a permutation of 0..{t.ndim - 1}")
    return np.ascontiguousarray(np.transpose(t, axes))


def inverse_permutation(axes: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(axes)
    for i, a in enumerate(axes):
        inv[a] = i
    return tuple(inv)


def check_finite(t: np.ndarray, where: str = "") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NonFiniteValue(f"non-finite value produced{' by ' + where if where else ''}")
    return t
