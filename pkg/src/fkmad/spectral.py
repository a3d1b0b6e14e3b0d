"""Discrete Fourier transform, written out by hand.

Two routes compute the same sums: an iterative radix-2 transform for
power-of-two lengths (vectorized over any number of leading batch axes) and
a direct O(n^2) evaluation that doubles as the correctness oracle and as the
fallback for awkward lengths.  Forward convention: X_f = sum_t x_t
e^{-2*pi*i*f*t/n}, no normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Spectrum:
    """DFT bins of one real signal plus the length they came from."""

    bins: np.ndarray  # complex128, shape (n,)
    sample_length: int

    def power(self) -> np.ndarray:
        return np.abs(self.bins) ** 2


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 transform along the last axis (n a power of two)."""
    n = x.shape[-1]
    y = np.ascontiguousarray(x[..., _bit_reversal(n)]).astype(np.complex128)
    half = 1
    while half < n:
        tw = np.exp(-1j * np.pi * np.arange(half) / half)  # e^{-2pi i k / (2*half)}
        blocks = y.reshape(y.shape[:-1] + (n // (2 * half), 2, half))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1).reshape(y.shape)
        half *= 2
    return y


def _dft_direct(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    t = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(t, t) / n)  # (n, n), symmetric
    return x @ basis


def dft_many(x: np.ndarray) -> np.ndarray:
    """Transform along the last axis of a real or complex batch."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("cannot transform an empty signal")
    if n == 1:
        return x.astype(np.complex128)
    if _is_pow2(n):
        return _fft_pow2(x)
    return _dft_direct(x.astype(np.complex128))


def dft(signal: np.ndarray) -> Spectrum:
    """Full spectrum of a single 1-D signal."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError(f"dft expects a 1-D signal, got shape {signal.shape}")
    if signal.size == 0:
        raise ValueError("cannot transform an empty signal")
    return Spectrum(bins=dft_many(signal), sample_length=signal.size)


def spectral_energy(spectrum: Spectrum) -> float:
    """(1/n) * sum_f |X_f|^2; equals sum_t x_t^2 by Parseval."""
    return float(spectrum.power().sum() / spectrum.sample_length)


def high_frequency_ratio(power: np.ndarray, cutoff_fraction: float = 0.5) -> float:
    """Share of non-DC power at or above the cutoff bin.

    `power` holds |X_f|^2 for a length-n transform.  Only bins 1..n//2 enter
    (DC excluded, conjugate mirror ignored); the cutoff bin is
    ceil(cutoff_fraction * n/2).  Zero spectral mass returns 0.
    """
    n = power.shape[-1]
    half = n // 2
    if half < 1:
        return 0.0
    cut = int(np.ceil(cutoff_fraction * half))
    cut = max(cut, 1)
    band = power[1 : half + 1]
    denom = float(band.sum())
    if denom <= 0.0:
        return 0.0
    return float(band[cut - 1 :].sum() / denom)
