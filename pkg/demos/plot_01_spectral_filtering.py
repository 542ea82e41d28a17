"""
Filtering in the frequency domain
=================================

Multiplying a real spectrum by a filter and transforming back is the same
as circularly convolving the signal with the filter's equivalent kernel.
This script checks that on a random signal and prints the kernel.
"""

import numpy as np

from dtfnet import fft
from dtfnet.dtf import export_equivalent_kernel
from dtfnet.fft import ComplexSeq

rng = np.random.default_rng(0)
T = 16
x = rng.normal(size=T)

###############################################################################
# A real signal of length T has T//2 + 1 independent bins.

X = fft.rfft(x)
print("bins:", len(X))
print("DC bin is the sum:", X.re[0], x.sum())

###############################################################################
# A low-pass filter: keep the first four bins, drop the rest.

S = ComplexSeq(np.r_[np.ones(4), np.zeros(len(X) - 4)], np.zeros(len(X)))
filtered = fft.irfft(X * S, T)

###############################################################################
# The equivalent kernel is the inverse transform of the filter itself.
# Circular convolution with it gives the same output.

kernel = export_equivalent_kernel(S, T)
direct = fft.circular_convolve(kernel, x)
print("max |spectral - direct| =", np.max(np.abs(filtered - direct)))
np.set_printoptions(precision=3, suppress=True)
print("kernel:", kernel)

###############################################################################
# A pure phase ramp shifts the signal by whole frames.

m = np.arange(len(X))
shift = ComplexSeq(np.cos(-2 * np.pi * m * 3 / T), np.sin(-2 * np.pi * m * 3 / T))
print("shifted by 3:", np.allclose(fft.irfft(X * shift, T), np.roll(x, 3)))
