"""Trigonometric interpolation of periodic samples on a uniform grid."""

from __future__ import annotations

import numpy as np


def angle_grid(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


class PeriodicSamples:
    """Real 2*pi-periodic function known at ``angle_grid(n)``.

    Evaluation and differentiation use the truncated Fourier series, so both
    are spectrally accurate for smooth data.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 4:
            raise ValueError("need a 1-d array of at least 4 samples")
        self.values = values
        self.n = values.size
        c = np.fft.rfft(values) / self.n
        if self.n % 2 == 0:
            # split the Nyquist mode so the interpolant stays real and symmetric
            c[-1] *= 0.5
        self.coeffs = c
        self.k = np.arange(c.size)

    def tail_ratio(self, fraction: float = 0.25) -> float:
        """max |c_k| over the top ``fraction`` of modes, relative to max |c_k|."""
        mag = np.abs(self.coeffs)
        start = int(mag.size * (1.0 - fraction))
        return float(mag[start:].max() / max(mag.max(), 1e-300))

    def derivative_samples(self, order: int = 1) -> np.ndarray:
        """Derivative values on the grid nodes."""
        c = self.coeffs * (1j * self.k) ** order
        if self.n % 2 == 0 and order % 2 == 1:
            c = c.copy()
            c[-1] = 0.0
        full = c * self.n
        if self.n % 2 == 0:
            full = full.copy()
            full[-1] *= 2.0
        return np.fft.irfft(full, n=self.n)

    def upsampled(self, m: int, order: int = 0) -> np.ndarray:
        """Values (or derivatives) on ``angle_grid(m)``, m >= n, by zero padding."""
        if m < self.n:
            raise ValueError("upsampling target must not be smaller than the grid")
        c = self.coeffs * (1j * self.k) ** order
        if self.n % 2 == 0 and order % 2 == 1:
            c = c.copy()
            c[-1] = 0.0
        padded = np.zeros(m // 2 + 1, dtype=complex)
        padded[:c.size] = c * m
        if m == self.n and m % 2 == 0:
            padded[-1] *= 2.0
        return np.fft.irfft(padded, n=m)

    def __call__(self, phi, order: int = 0):
        phi = np.asarray(phi, dtype=float)
        c = self.coeffs * (1j * self.k) ** order
        if self.n % 2 == 0 and order % 2 == 1:
            c = c.copy()
            c[-1] = 0.0
        flat = phi.reshape(-1)
        out = np.empty(flat.size)
        # chunked to bound the (points x modes) work array
        for s in range(0, flat.size, 4096):
            e = np.exp(1j * np.outer(flat[s:s + 4096], self.k))
            vals = e @ c
            out[s:s + 4096] = 2.0 * vals.real - c[0].real
        return out.reshape(phi.shape)

    def mean(self) -> float:
        return float(self.coeffs[0].real)
