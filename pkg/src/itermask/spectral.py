"""Discrete Fourier transforms and the high-pass structural-guidance filter.

Convention: unnormalized forward transform, 1/N inverse. The high-pass filter
zeroes amplitudes within a Euclidean radius of the centered spectrum origin
while keeping all phase, producing a real, zero-mean structure image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume


@dataclass(frozen=True)
class SpectralField:
    """Complex frequency-domain representation of a volume."""

    coeffs: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    @property
    def dims(self):
        return self.coeffs.shape


@dataclass(frozen=True)
class HighPassSpec:
    """Cutoff radius, in centered frequency-index units."""

    radius: float = 15.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


def dft_forward(v: Volume) -> SpectralField:
    """Unnormalized forward DFT: coeff[a] = sum_h x[h] exp(-2*pi*i*a.h/N)."""
    return SpectralField(np.fft.fftn(v.data.astype(np.float64)), v.spacing)


def dft_inverse(f: SpectralField, imag_tol: float = 1e-4) -> Volume:
    """Inverse DFT with 1/N normalization; discards the imaginary residue.

    Raises if the residue exceeds imag_tol * max|real|, which indicates the
    field was not (numerically) Hermitian, i.e. not the spectrum of a real
    volume.
    """
    full = np.fft.ifftn(f.coeffs)
    peak = float(np.abs(full.real).max())
    residue = float(np.abs(full.imag).max())
    if residue > imag_tol * peak + 1e-12:
        raise ValueError(
            f"imaginary residue {residue:.3e} exceeds {imag_tol:.0e} * max|real| ({peak:.3e})"
        )
    return Volume(full.real.astype(np.float32), f.spacing)


def amplitude_phase(f: SpectralField):
    """Split coefficients into (amplitude, phase); phase of a zero coeff is 0."""
    return np.abs(f.coeffs), np.angle(f.coeffs)


def centered_distance(dims) -> np.ndarray:
    """Euclidean distance of each centered-spectrum index from the DC bin."""
    axes = np.ix_(*(np.arange(n, dtype=np.float64) - n // 2 for n in dims))
    return np.sqrt(sum(a**2 for a in axes))


def high_frequency_image(v: Volume, spec=None) -> Volume:
    """High-pass structure image: zero amplitudes within `radius` of the
    centered DC bin, keep all phase, invert.

    Frequencies strictly farther than the radius are kept, so radius 0
    removes only the DC term (mean subtraction). The output is real with
    zero spatial mean.
    """
    if spec is None:
        spec = HighPassSpec()
    elif not isinstance(spec, HighPassSpec):
        spec = HighPassSpec(float(spec))
    coeffs = np.fft.fftshift(np.fft.fftn(v.data.astype(np.float64)))
    coeffs[centered_distance(v.dims) <= spec.radius] = 0.0
    return dft_inverse(SpectralField(np.fft.ifftshift(coeffs), v.spacing))
