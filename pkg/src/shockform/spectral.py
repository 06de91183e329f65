"""Fourier collocation derivatives on periodic uniform grids."""

from __future__ import annotations

import numpy as np

__all__ = ["spectral_derivative", "derivative_factors", "tail_energy_fraction"]


def derivative_factors(num_points: int, domain_length: float, order: int) -> np.ndarray:
    """Multipliers (i k)^order for the rfft modes of a real periodic signal.

    The Nyquist mode is zeroed for odd orders: its contribution to an odd
    derivative is pure imaginary and cannot be represented by a real
    trigonometric interpolant on the grid.
    """
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    k = 2.0 * np.pi * np.fft.rfftfreq(num_points, d=domain_length / num_points)
    fac = (1j * k) ** order
    if order % 2 == 1 and num_points % 2 == 0:
        fac[-1] = 0.0
    return fac


def spectral_derivative(
    values: np.ndarray, order: int = 1, domain_length: float = 1.0
) -> np.ndarray:
    """Derivative of the trigonometric interpolant of periodic samples.

    ``values`` may be a single array or a batch with samples along the
    last axis.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite input to spectral_derivative")
    n = values.shape[-1]
    fac = derivative_factors(n, domain_length, order)
    return np.fft.irfft(np.fft.rfft(values, axis=-1) * fac, n=n, axis=-1)


def tail_energy_fraction(spectrum: np.ndarray, tail_fraction: float = 0.25) -> float:
    """Fraction of non-mean spectral energy carried by the top wavenumbers.

    ``spectrum`` is an rfft of the signal; a resolved smooth field has a
    negligible tail, so this serves as a per-step resolution monitor.
    """
    power = np.abs(spectrum) ** 2
    power = power[..., 1:]  # drop the mean
    total = np.sum(power, axis=-1)
    cut = int(round(power.shape[-1] * (1.0 - tail_fraction)))
    tail = np.sum(power[..., cut:], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total > 0.0, tail / total, 0.0)
    return float(np.max(frac))
