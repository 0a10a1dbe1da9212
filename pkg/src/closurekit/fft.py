"""Iterative radix-2 complex FFT.

Conventions
-----------
``fft`` is the unnormalised forward transform

    X[k] = sum_n x[n] exp(-2 pi i k n / N)

and ``ifft`` its exact inverse (carries the 1/N).  The Burgers solver works
with Fourier-series coefficients ``u_hat = fft(u) / N`` so that
``u(x) = sum_k u_hat[k] exp(i k x)``; see :func:`to_spectral` and
:func:`to_physical`.  Transforms act on the last axis and accept batches.
"""

from functools import lru_cache

import numpy as np

from .errors import InvalidGrid


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _plan(n, sign):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    perm = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        perm |= ((idx >> b) & 1) << (bits - 1 - b)
    twiddles = []
    half = 1
    while half < n:
        twiddles.append(np.exp(sign * 1j * np.pi * np.arange(half) / half))
        half *= 2
    return perm, tuple(twiddles)


def _transform(x, sign):
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise InvalidGrid(f"FFT length must be a power of two, got {n}")
    perm, twiddles = _plan(n, sign)
    lead = x.shape[:-1]
    y = x[..., perm]
    half = 1
    for tw in twiddles:
        y = y.reshape(*lead, n // (2 * half), 2, half)
        odd = y[..., 1, :] * tw
        even = y[..., 0, :]
        out = np.empty_like(y)
        np.add(even, odd, out=out[..., 0, :])
        np.subtract(even, odd, out=out[..., 1, :])
        y = out
        half *= 2
    return y.reshape(*lead, n)


def fft(x):
    """Forward DFT along the last axis (no normalisation)."""
    return _transform(x, -1.0)


def ifft(x):
    """Inverse DFT along the last axis, ``ifft(fft(x)) == x``."""
    x = np.asarray(x)
    return _transform(x, 1.0) / x.shape[-1]


def to_spectral(u):
    """Physical samples on a uniform periodic grid -> Fourier-series coefficients."""
    u = np.asarray(u)
    return fft(u) / u.shape[-1]


def to_physical(u_hat):
    """Inverse of :func:`to_spectral`."""
    return _transform(u_hat, 1.0)


def wavenumbers(n):
    """Integer wavenumbers in transform order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
    k = np.arange(n)
    k[n // 2:] -= n
    return k


def dft(x):
    """Direct O(N^2) DFT.  Slow; meant as a reference for testing."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ mat.T
