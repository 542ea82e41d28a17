"""Dynamic temporal filtering in the frequency domain.

At each spatial location the ``C x T`` temporal feature is transformed to a
``C x M`` half spectrum (``M = T//2 + 1``), multiplied by a complex filter
predicted from that same location's feature (plus its correlation weights),
transformed back and added to the input. Filters are predicted for ``C/G``
channel groups and each group's row is repeated over its ``G`` channels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import fft
from .autograd import value_of
from .errors import GroupMismatch, ShapeMismatch, SpectrumSizeMismatch
from .fft import ComplexSeq
from .nn import linear

ESTIMATOR_INIT_STD = 1e-3


@dataclass
class FilterEstimator:
    """Fully connected map from a location's ``(C + k^2) x T`` feature to its filter.

    ``weight`` has shape ``(2 * C/G * M, (C + k^2) * T)``; the output holds the
    real plane of the ``C/G x M`` filter followed by the imaginary plane.
    """

    weight: np.ndarray
    bias: np.ndarray
    channels: int
    groups: int  # channels sharing one filter row (the group factor G)
    T: int
    k: int

    @property
    def M(self) -> int:
        return fft.spectrum_size(self.T)

    @property
    def rows(self) -> int:
        return self.channels // self.groups

    @classmethod
    def init(cls, channels: int, groups: int, T: int, k: int, rng: np.random.Generator,
             identity: bool = True) -> "FilterEstimator":
        weight, bias = init_estimator(channels, groups, T, k, rng, identity)
        return cls(weight, bias, channels, groups, T, k)


def estimator_shapes(channels: int, groups: int, T: int, k: int) -> tuple[tuple[int, int], tuple[int]]:
    if groups < 1 or channels % groups:
        raise GroupMismatch(f"group factor {groups} does not divide {channels} channels")
    out = 2 * (channels // groups) * fft.spectrum_size(T)
    return (out, (channels + k * k) * T), (out,)


def init_estimator(channels, groups, T, k, rng, identity=True):
    """Small random weight; bias gives the all-ones filter when ``identity``."""
    wshape, bshape = estimator_shapes(channels, groups, T, k)
    weight = rng.normal(0.0, ESTIMATOR_INIT_STD, size=wshape)
    bias = np.zeros(bshape)
    if identity:
        bias[: bshape[0] // 2] = 1.0
    return weight, bias


def estimate_filter(f_loc, est: FilterEstimator) -> ComplexSeq:
    """Intermediate ``C/G x M`` filter for one location's ``(C + k^2) x T`` feature."""
    f_loc = np.asarray(f_loc, dtype=np.float64)
    expected = (est.channels + est.k * est.k, est.T)
    if f_loc.shape != expected:
        raise ShapeMismatch(f"location feature {f_loc.shape}, estimator expects {expected}")
    out = linear(f_loc.reshape(1, -1), est.weight, est.bias).reshape(2, est.rows, est.M)
    return ComplexSeq(out[0], out[1])


def expand_filter(S_i: ComplexSeq, channels: int) -> ComplexSeq:
    """Repeat each group row over its block of consecutive channels."""
    rows = S_i.shape[-2]
    if rows < 1 or channels % rows:
        raise GroupMismatch(f"{rows} filter rows cannot be spread over {channels} channels")
    G = channels // rows
    return ComplexSeq(np.repeat(S_i.re, G, axis=-2), np.repeat(S_i.im, G, axis=-2))


def modulate_spectrum(S: ComplexSeq, S_c: ComplexSeq) -> ComplexSeq:
    return S * S_c


def predict_filters(F_enh, F_cor, weight, bias, groups: int):
    """Expanded filters for every location: ``(N, H, W, C, M, 2)``."""
    Fv = value_of(F_enh)
    N, C, T, H, W = Fv.shape
    kk = value_of(F_cor).shape[1]
    M = fft.spectrum_size(T)
    wshape, _ = estimator_shapes(C, groups, T, int(round(np.sqrt(kk))))
    if value_of(weight).shape != wshape:
        raise SpectrumSizeMismatch(f"estimator weight {value_of(weight).shape}, expected {wshape}")
    rows = C // groups
    z = ag.concat([F_enh, F_cor], axis=1)
    z = ag.reshape(ag.permute(z, (0, 3, 4, 1, 2)), (N * H * W, (C + kk) * T))
    o = linear(z, weight, bias)
    o = ag.permute(ag.reshape(o, (N, H, W, 2, rows, M)), (0, 1, 2, 4, 5, 3))
    return ag.repeat(o, groups, axis=3)


def apply_filters(F, filters):
    """``F + irfft(rfft(F) * filters)`` along time for every location and channel.

    ``filters`` has shape ``(N, H, W, C, M, 2)``.
    """
    N, C, T, H, W = value_of(F).shape
    f = ag.permute(F, (0, 3, 4, 1, 2))  # N H W C T
    modulated = ag.cmul(ag.rfft(f), filters)
    out = ag.add(f, ag.irfft(modulated, T))
    return ag.permute(out, (0, 3, 4, 1, 2))


def dtf_mechanism_forward(F_enh, F_cor, weight, bias, groups: int):
    """Dynamic temporal filtering of ``N x C x T x H x W`` features with residual fusion."""
    Fv = value_of(F_enh)
    if Fv.ndim != 5:
        raise ShapeMismatch(f"expected N x C x T x H x W, got {Fv.shape}")
    cv = value_of(F_cor)
    if cv.ndim != 5 or cv.shape[0] != Fv.shape[0] or cv.shape[2:] != Fv.shape[2:]:
        raise ShapeMismatch(f"correlation map {cv.shape} does not match features {Fv.shape}")
    return apply_filters(F_enh, predict_filters(F_enh, F_cor, weight, bias, groups))


def export_equivalent_kernel(row: ComplexSeq, T: int) -> np.ndarray:
    """Temporal kernel whose circular convolution equals multiplying by ``row``."""
    if len(row) != fft.spectrum_size(T):
        raise SpectrumSizeMismatch(f"{len(row)} bins do not match T={T}")
    return fft.irfft(row, T)


def write_filter_csv(path, S_c: ComplexSeq, T: int) -> Path:
    """Dump a ``C x M`` filter and its equivalent kernels.

    The file holds a ``channel,bin,re,im`` table followed by a
    ``channel,t,kernel`` table.
    """
    path = Path(path)
    kernels = export_equivalent_kernel(S_c, T)
    C, M = S_c.shape
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "bin", "re", "im"])
        for c in range(C):
            for m in range(M):
                w.writerow([c, m, repr(float(S_c.re[c, m])), repr(float(S_c.im[c, m]))])
        w.writerow(["channel", "t", "kernel"])
        for c in range(C):
            for t in range(T):
                w.writerow([c, t, repr(float(kernels[c, t]))])
    return path


def read_filter_csv(path) -> tuple[ComplexSeq, np.ndarray]:
    """Inverse of :func:`write_filter_csv`: returns ``(S_c, kernels)``."""
    spec_rows, kern_rows = [], []
    target = None
    with Path(path).open(encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row[:2] == ["channel", "bin"]:
                target = spec_rows
            elif row[:2] == ["channel", "t"]:
                target = kern_rows
            else:
                target.append(row)
    C = 1 + max(int(r[0]) for r in spec_rows)
    M = 1 + max(int(r[1]) for r in spec_rows)
    T = 1 + max(int(r[1]) for r in kern_rows)
    re, im, kern = np.zeros((C, M)), np.zeros((C, M)), np.zeros((C, T))
    for c, m, a, b in spec_rows:
        re[int(c), int(m)], im[int(c), int(m)] = float(a), float(b)
    for c, t, v in kern_rows:
        kern[int(c), int(t)] = float(v)
    return ComplexSeq(re, im), kern
