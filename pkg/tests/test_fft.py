import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtfnet import fft
from dtfnet.errors import EmptySignal, ShapeMismatch, SpectrumSizeMismatch
from dtfnet.fft import ComplexSeq


def _mp_dft(values):
    """Reference DFT evaluated at 40 significant digits."""
    T = len(values)
    with mpmath.workdps(40):
        out = []
        for k in range(T):
            acc = mpmath.mpc(0)
            for t, v in enumerate(values):
                acc += mpmath.mpc(v.real, v.imag) * mpmath.expjpi(-2 * mpmath.mpf(k * t) / T)
            out.append(complex(acc))
    return np.array(out)


def test_dft_delta_and_constant():
    out = fft.dft_naive(ComplexSeq([1, 0, 0, 0], [0, 0, 0, 0]))
    np.testing.assert_allclose(out.to_complex(), np.ones(4), atol=1e-15)
    c = 2.5
    out = fft.dft_naive(ComplexSeq([c] * 4, [0] * 4))
    np.testing.assert_allclose(out.to_complex(), [4 * c, 0, 0, 0], atol=1e-14)


def test_dft_matches_high_precision(rng):
    z = rng.normal(size=7) + 1j * rng.normal(size=7)
    out = fft.dft_naive(ComplexSeq.from_complex(z)).to_complex()
    np.testing.assert_allclose(out, _mp_dft(z), atol=1e-13)


def test_dft_empty():
    with pytest.raises(EmptySignal):
        fft.dft_naive(ComplexSeq([], []))
    with pytest.raises(EmptySignal):
        fft.idft_naive(ComplexSeq([], []))
    with pytest.raises(EmptySignal):
        fft.rfft([])


def test_idft_inverts_dft(rng):
    x = ComplexSeq(rng.normal(size=8), rng.normal(size=8))
    back = fft.idft_naive(fft.dft_naive(x))
    np.testing.assert_allclose(back.to_complex(), x.to_complex(), atol=1e-10)


def test_idft_dc_and_zero():
    T = 5
    out = fft.idft_naive(ComplexSeq([T, 0, 0, 0, 0], [0] * 5))
    np.testing.assert_allclose(out.to_complex(), np.ones(T), atol=1e-15)
    out = fft.idft_naive(ComplexSeq(np.zeros(6), np.zeros(6)))
    assert np.all(out.to_complex() == 0)


def test_rfft_impulse():
    s = fft.rfft([1.0, 0, 0, 0])
    assert len(s) == 3
    np.testing.assert_allclose(s.re, [1, 1, 1])
    np.testing.assert_allclose(s.im, [0, 0, 0])


@pytest.mark.parametrize("T, M", [(16, 9), (7, 4), (1, 1), (2, 2)])
def test_spectrum_size(T, M):
    assert fft.spectrum_size(T) == M
    assert len(fft.rfft(np.ones(T))) == M


@pytest.mark.parametrize("T", [12, 16, 7, 32, 64, 5, 1])
def test_rfft_matches_naive(rng, T):
    x = rng.normal(size=T)
    ref = fft.dft_naive(ComplexSeq(x, np.zeros(T))).to_complex()[: fft.spectrum_size(T)]
    np.testing.assert_allclose(fft.rfft(x).to_complex(), ref, atol=1e-10)


def test_radix2_complex_matches_naive(rng):
    for T in (2, 4, 8, 32, 64):
        z = rng.normal(size=(3, T)) + 1j * rng.normal(size=(3, T))
        ref = fft.dft_naive(ComplexSeq.from_complex(z)).to_complex()
        np.testing.assert_allclose(fft.fft(z), ref, atol=1e-10)


def test_rfft_batched_matches_rowwise(rng):
    x = rng.normal(size=(2, 3, 8))
    batched = fft.rfft(x).to_complex()
    for i in range(2):
        for j in range(3):
            np.testing.assert_allclose(batched[i, j], fft.rfft(x[i, j]).to_complex(), atol=1e-14)


def test_irfft_roundtrip(rng):
    for T in range(2, 34):
        x = rng.normal(size=T)
        np.testing.assert_allclose(fft.irfft(fft.rfft(x), T), x, atol=1e-10)


def test_irfft_single_bin():
    # mirrored full spectrum [0, 1, 0, 1] through the naive inverse
    full = ComplexSeq([0, 1, 0, 1], [0, 0, 0, 0])
    expected = fft.idft_naive(full).re
    out = fft.irfft(ComplexSeq([0, 1, 0], [0, 0, 0]), 4)
    np.testing.assert_allclose(out, expected, atol=1e-15)
    np.testing.assert_allclose(out, [0.5, 0, -0.5, 0], atol=1e-15)


def test_irfft_size_mismatch():
    with pytest.raises(SpectrumSizeMismatch):
        fft.irfft(ComplexSeq(np.zeros(4), np.zeros(4)), 5)


def test_irfft_output_real_for_arbitrary_spectrum(rng):
    # DC / Nyquist imaginary parts are dropped by the mirrored construction
    for T in (6, 7, 8):
        M = fft.spectrum_size(T)
        s = ComplexSeq(rng.normal(size=M), rng.normal(size=M))
        out = fft.irfft(s, T)
        assert out.dtype == np.float64
        full = fft.hermitian_extend(s, T)
        assert np.max(np.abs(np.fft.ifft(full).imag)) < 1e-9


def test_circular_convolve_identities(rng):
    f = rng.normal(size=6)
    delta = np.zeros(6)
    delta[0] = 1
    np.testing.assert_array_equal(fft.circular_convolve(f, delta), f)
    shift = np.zeros(6)
    shift[1] = 1
    np.testing.assert_array_equal(fft.circular_convolve(f, shift), np.roll(f, 1))


def test_circular_convolve_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        fft.circular_convolve(np.ones(3), np.ones(4))


def test_convolution_theorem_T8(rng):
    f, g = rng.normal(size=8), rng.normal(size=8)
    spec = fft.rfft(f) * fft.rfft(g)
    np.testing.assert_allclose(fft.irfft(spec, 8), fft.circular_convolve(f, g), atol=1e-9)


signals = st.integers(2, 64).flatmap(
    lambda T: st.tuples(st.just(T), st.integers(0, 2**32 - 1))
)


@settings(max_examples=60, deadline=None)
@given(signals)
def test_parseval(case):
    T, seed = case
    x = np.random.default_rng(seed).normal(size=T)
    full = fft.hermitian_extend(fft.rfft(x), T)
    lhs = np.sum(x**2)
    rhs = np.sum(np.abs(full) ** 2) / T
    assert abs(lhs - rhs) <= 1e-9 * lhs


@settings(max_examples=60, deadline=None)
@given(signals)
def test_convolution_theorem(case):
    T, seed = case
    r = np.random.default_rng(seed)
    f, g = r.normal(size=T), r.normal(size=T)
    out = fft.irfft(fft.rfft(f) * fft.rfft(g), T)
    assert np.max(np.abs(out - fft.circular_convolve(f, g))) < 1e-9


@settings(max_examples=40, deadline=None)
@given(signals, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(case, a, b):
    T, seed = case
    r = np.random.default_rng(seed)
    x, y = r.normal(size=T), r.normal(size=T)
    lhs = fft.rfft(a * x + b * y).to_complex()
    rhs = a * fft.rfft(x).to_complex() + b * fft.rfft(y).to_complex()
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(signals)
def test_hermitian_endpoints_exactly_real(case):
    T, seed = case
    s = fft.rfft(np.random.default_rng(seed).normal(size=T))
    assert s.im[0] == 0.0
    if T % 2 == 0:
        assert s.im[-1] == 0.0


def test_circular_convolve_matches_scalar_loop(rng):
    f, g = rng.normal(size=9), rng.normal(size=9)
    ref = [sum(f[tau] * g[(t - tau) % 9] for tau in range(9)) for t in range(9)]
    np.testing.assert_allclose(fft.circular_convolve(f, g), ref, atol=1e-13)
