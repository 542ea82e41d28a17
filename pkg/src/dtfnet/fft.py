"""Fourier transforms along the last (temporal) axis.

Forward transforms are unnormalized and inverse transforms carry ``1/T``:

    S[k] = sum_t f[t] exp(-2j*pi*k*t/T)
    f[t] = 1/T sum_k S[k] exp(+2j*pi*k*t/T)

Power-of-two lengths go through an iterative radix-2 decimation-in-time FFT;
any other length uses the direct O(T^2) sum. All functions broadcast over the
leading axes, so a whole ``(..., T)`` stack of signals is transformed at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptySignal, ShapeMismatch, SpectrumSizeMismatch

#: Allowed imaginary residue (relative to signal scale) when inverting a
#: half spectrum back to a real signal.
REAL_RESIDUE_TOL = 1e-9


@dataclass
class ComplexSeq:
    """Spectrum stored as separate real and imaginary planes of shape ``(..., M)``."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != self.im.shape:
            raise ShapeMismatch(f"re {self.re.shape} and im {self.im.shape} differ")

    @classmethod
    def from_complex(cls, z) -> "ComplexSeq":
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real.copy(), z.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def __len__(self) -> int:
        return self.re.shape[-1]

    def __mul__(self, other: "ComplexSeq") -> "ComplexSeq":
        if self.shape != other.shape:
            raise ShapeMismatch(f"cannot multiply spectra {self.shape} and {other.shape}")
        return ComplexSeq(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )


def spectrum_size(T: int) -> int:
    """Number of independent bins in the spectrum of a real length-``T`` signal."""
    return T // 2 + 1


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, sign: int = -1) -> np.ndarray:
    half = size // 2
    return np.exp(sign * 2j * np.pi * np.arange(half) / size)


@lru_cache(maxsize=None)
def _dft_matrix(n: int, sign: int) -> np.ndarray:
    # reduce k*t modulo n first so large products do not lose phase accuracy
    kt = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(sign * 2j * np.pi * kt / n)


def _radix2(z: np.ndarray, sign: int = -1) -> np.ndarray:
    n = z.shape[-1]
    lead = z.shape[:-1]
    # time-major layout keeps every butterfly a contiguous block operation
    a = z.reshape(-1, n).T[_bit_reversal(n)]
    b = np.empty_like(a)
    size = 2
    while size <= n:
        half = size // 2
        a3 = a.reshape(n // size, size, -1)
        b3 = b.reshape(n // size, size, -1)
        if half == 1:
            odd = a3[:, 1:]
        else:
            odd = a3[:, half:] * _twiddles(size, sign)[None, :, None]
        np.add(a3[:, :half], odd, out=b3[:, :half])
        np.subtract(a3[:, :half], odd, out=b3[:, half:])
        a, b = b, a
        size *= 2
    return a.T.reshape(lead + (n,))


def fft(z) -> np.ndarray:
    """Complex forward DFT along the last axis (radix-2 when possible)."""
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    if n == 0:
        raise EmptySignal("cannot transform an empty signal")
    if is_power_of_two(n):
        return _radix2(z)
    return z @ _dft_matrix(n, -1)


def ifft(z) -> np.ndarray:
    """Complex inverse DFT along the last axis, scaled by ``1/T``."""
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    if n == 0:
        raise EmptySignal("cannot transform an empty spectrum")
    if is_power_of_two(n):
        return _radix2(z, +1) / n
    return z @ _dft_matrix(n, +1) / n


def dft_naive(signal: ComplexSeq) -> ComplexSeq:
    """Direct evaluation of the DFT sum, one bin at a time."""
    T = len(signal)
    if T == 0:
        raise EmptySignal("cannot transform an empty signal")
    z = signal.to_complex()
    return ComplexSeq.from_complex(z @ _dft_matrix(T, -1))


def idft_naive(spectrum: ComplexSeq) -> ComplexSeq:
    T = len(spectrum)
    if T == 0:
        raise EmptySignal("cannot transform an empty spectrum")
    z = spectrum.to_complex()
    return ComplexSeq.from_complex(z @ _dft_matrix(T, +1) / T)


def _packed_real_fft(x: np.ndarray) -> np.ndarray:
    """First ``T/2 + 1`` bins of a real even-length signal from one length-``T/2`` complex FFT.

    Even samples go in the real part and odd samples in the imaginary part;
    the two half-length spectra are then separated by conjugate symmetry and
    merged with one more butterfly.
    """
    T = x.shape[-1]
    h = T // 2
    Z = _radix2(x[..., 0::2] + 1j * x[..., 1::2])
    Zk = np.concatenate([Z, Z[..., :1]], axis=-1)  # k = 0..h, Z[h] = Z[0]
    Zr = np.conj(Zk[..., ::-1])  # conj(Z[h - k])
    even = 0.5 * (Zk + Zr)
    odd = -0.5j * (Zk - Zr)
    return even + _half_twiddles(T) * odd


@lru_cache(maxsize=None)
def _half_twiddles(T: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(T // 2 + 1) / T)


def rfft(signal) -> ComplexSeq:
    """Half spectrum (``M = T//2 + 1`` bins) of a real signal along the last axis."""
    x = np.asarray(signal, dtype=np.float64)
    T = x.shape[-1]
    if T == 0:
        raise EmptySignal("cannot transform an empty signal")
    M = spectrum_size(T)
    if T == 1:
        z = x.astype(np.complex128)
    elif is_power_of_two(T):
        z = _packed_real_fft(x)
    else:
        z = x @ _dft_matrix(T, -1)[:, :M]
    out = ComplexSeq.from_complex(z)
    # a real signal's DC (and Nyquist, T even) bins are real by symmetry
    out.im[..., 0] = 0.0
    if T % 2 == 0:
        out.im[..., M - 1] = 0.0
    return out


def hermitian_extend(spectrum: ComplexSeq, T: int) -> np.ndarray:
    """Full length-``T`` conjugate-symmetric spectrum built from a half spectrum.

    The DC bin, and the Nyquist bin when ``T`` is even, keep only their real
    part, so the result is always the spectrum of some real signal.
    """
    M = len(spectrum)
    if M != spectrum_size(T):
        raise SpectrumSizeMismatch(f"{M} bins do not describe a length-{T} real signal")
    half = spectrum.to_complex()
    full = np.zeros(half.shape[:-1] + (T,), dtype=np.complex128)
    full[..., :M] = half
    full[..., 0] = half[..., 0].real
    if T % 2 == 0:
        full[..., M - 1] = half[..., M - 1].real
    n_mirror = (T - 1) // 2
    if n_mirror:
        full[..., T - n_mirror:] = np.conj(half[..., 1:n_mirror + 1][..., ::-1])
    return full


def irfft(spectrum: ComplexSeq, T: int) -> np.ndarray:
    """Real length-``T`` signal whose half spectrum is ``spectrum``."""
    full = hermitian_extend(spectrum, T)
    z = ifft(full)
    scale = max(1.0, float(np.max(np.abs(z.real), initial=0.0)))
    residue = float(np.max(np.abs(z.imag), initial=0.0))
    if residue > REAL_RESIDUE_TOL * scale:
        raise FloatingPointError(f"inverse transform left imaginary residue {residue:.3g}")
    return np.ascontiguousarray(z.real)


def circular_convolve(f, g) -> np.ndarray:
    """``out[t] = sum_tau f[tau] * g[(t - tau) mod T]`` by direct summation."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ShapeMismatch(f"cannot convolve {f.shape} with {g.shape}")
    T = f.shape[-1]
    if T == 0:
        return f.copy()
    # every (t, tau) product of the direct sum at once: g index (t - tau) mod T
    idx = (np.arange(T)[:, None] - np.arange(T)[None, :]) % T
    return (f[..., None, :] * g[..., idx]).sum(axis=-1)
