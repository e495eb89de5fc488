"""Synthetic acquisition-artifact generators with severity parameters.

Seven corruption types: missing chunk, k-space Gaussian noise, k-space
spikes, multiplicative polynomial bias field, ghosting, zipper stripes, and
sequence swap (volume substitution). Localized generators also emit a
ground-truth anomaly mask. Every generator is the identity at zero severity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volume import Volume, derive_brain_mask

BIAS_ORDER = 3


def _fftn(v: Volume) -> np.ndarray:
    return np.fft.fftn(v.data.astype(np.float64))


def _ifftn_real(coeffs: np.ndarray) -> np.ndarray:
    # Spike/ghosting perturbations are not Hermitian; the real part is the image.
    return np.fft.ifftn(coeffs).real.astype(np.float32)


def _axis_extent_of_brain(brain: np.ndarray, axis: int):
    planes = np.any(brain, axis=tuple(a for a in range(3) if a != axis))
    idx = np.flatnonzero(planes)
    if idx.size == 0:
        raise ValueError("cannot locate brain extent in an empty volume")
    return int(idx[0]), int(idx[-1])


def apply_chunk(v: Volume, width: int, position: str = "top", axis: int = 2):
    """Zero a band of `width` planes at the top of the brain extent or centered
    on the brain centroid along `axis`. Returns (volume, ground-truth mask)."""
    if width < 0:
        raise ValueError("width must be >= 0")
    if position not in ("top", "middle"):
        raise ValueError(f"position must be top|middle, got {position!r}")
    out = v.data.copy()
    truth = np.zeros(v.dims, dtype=bool)
    if width == 0:
        return v.with_data(out), truth
    n = v.dims[axis]
    if width > n:
        raise ValueError(f"width {width} exceeds axis extent {n}")
    brain = derive_brain_mask(v)
    if position == "top":
        _, hi = _axis_extent_of_brain(brain, axis)
        start = hi - width + 1
    else:
        coords = np.nonzero(brain)[axis]
        start = int(round(coords.mean())) - width // 2
    start = min(max(start, 0), n - width)
    band = [slice(None)] * 3
    band[axis] = slice(start, start + width)
    out[tuple(band)] = 0.0
    truth[tuple(band)] = True
    return v.with_data(out), truth & brain


def apply_gaussian_kspace(v: Volume, sigma: float, seed=0) -> Volume:
    """Add bounded-uniform complex noise to every k-space coefficient; the
    real/imag amplitudes are sigma times the largest |real| / |imag| part."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    coeffs = _fftn(v)
    rng = np.random.default_rng(seed)
    amp_re = sigma * float(np.abs(coeffs.real).max())
    amp_im = sigma * float(np.abs(coeffs.imag).max())
    noise = amp_re * rng.uniform(-1.0, 1.0, v.dims) + 1j * amp_im * rng.uniform(-1.0, 1.0, v.dims)
    return v.with_data(_ifftn_real(coeffs + noise))


def apply_spike(v: Volume, sigma: float, locations=((0.4, 0.4, 0.4),)) -> Volume:
    """Add sigma * max|K| at k-space points given as fractional offsets from
    the spectrum center, in units of the half-extent per axis."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    for loc in locations:
        if any(abs(c) > 1 for c in loc):
            raise ValueError(f"spike location {loc} outside [-1,1]^3")
    coeffs = np.fft.fftshift(_fftn(v))
    boost = sigma * float(np.abs(coeffs).max())
    center = np.array([n // 2 for n in v.dims])
    for loc in locations:
        idx = center + np.rint(np.asarray(loc) * (np.array(v.dims) / 2.0)).astype(int)
        idx = np.clip(idx, 0, np.array(v.dims) - 1)
        coeffs[tuple(idx)] += boost
    return v.with_data(_ifftn_real(np.fft.ifftshift(coeffs)))


def bias_field_exponent(dims, coefficients) -> np.ndarray:
    """Polynomial exponent sum(c_ijk * x^i y^j z^k) over coordinates normalized
    to [-1, 1] per axis, for all i+j+k <= 3."""
    coords = [
        (2.0 * np.arange(n) / (n - 1) - 1.0) if n > 1 else np.zeros(1) for n in dims
    ]
    x, y, z = np.ix_(*coords)
    exponent = np.zeros(dims)
    for i in range(BIAS_ORDER + 1):
        for j in range(BIAS_ORDER + 1 - i):
            for k in range(BIAS_ORDER + 1 - i - j):
                c = coefficients(i, j, k) if callable(coefficients) else coefficients.get((i, j, k), 0.0)
                if c:
                    exponent = exponent + c * (x**i) * (y**j) * (z**k)
    return exponent


def apply_bias_field(v: Volume, coefficients) -> Volume:
    """Multiply by exp(polynomial bias field). `coefficients` is a scalar (all
    c_ijk equal), a dict keyed by (i,j,k), or a callable (i,j,k) -> c."""
    if np.isscalar(coefficients):
        value = float(coefficients)
        coefficients = dict.fromkeys(
            (
                (i, j, k)
                for i in range(BIAS_ORDER + 1)
                for j in range(BIAS_ORDER + 1 - i)
                for k in range(BIAS_ORDER + 1 - i - j)
            ),
            value,
        )
    field = np.exp(bias_field_exponent(v.dims, coefficients))
    return v.with_data(v.data * field.astype(np.float32))


def apply_ghosting(v: Volume, alpha: float, period: int = 4, axis: int = 1) -> Volume:
    """Scale every period-th k-space plane (indices = 0 mod period along
    `axis`, unshifted order) by (1 - alpha)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if period < 1:
        raise ValueError("period must be >= 1")
    coeffs = _fftn(v)
    sel = [slice(None)] * 3
    sel[axis] = slice(0, None, period)
    coeffs[tuple(sel)] *= 1.0 - alpha
    return v.with_data(_ifftn_real(coeffs))


def apply_zipper(v: Volume, n_strips: int, height: int = 5, axis: int = 1, seed=0):
    """Replace bands of planes with a high-frequency alternating pattern.

    The pattern is +-A along the in-plane fast axis with A the 99th-percentile
    brain intensity. Band offsets are seeded-random. Returns (volume, mask)."""
    if n_strips < 0:
        raise ValueError("n_strips must be >= 0")
    if height < 1:
        raise ValueError("height must be >= 1")
    out = v.data.copy()
    band_mask = np.zeros(v.dims, dtype=bool)
    brain = derive_brain_mask(v)
    if n_strips == 0:
        return v.with_data(out), band_mask
    n = v.dims[axis]
    if height > n:
        raise ValueError(f"strip height {height} exceeds axis extent {n}")
    amplitude = float(np.percentile(v.data[brain], 99)) if brain.any() else 1.0
    fast_axis = 2 if axis != 2 else 1
    parity = np.indices(v.dims)[fast_axis] % 2
    pattern = np.where(parity == 0, amplitude, -amplitude).astype(np.float32)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n - height + 1, size=n_strips)
    for start in starts:
        band = [slice(None)] * 3
        band[axis] = slice(int(start), int(start) + height)
        band_mask[tuple(band)] = True
    out[band_mask] = pattern[band_mask]
    return v.with_data(out), band_mask & brain


def apply_sequence_swap(v: Volume, replacement: Volume | None = None) -> Volume:
    """Substitute a different-sequence volume; a marker rather than a synthesis.
    With no replacement the input passes through unchanged (zero severity)."""
    if replacement is None:
        return v
    return replacement


def severity_sweep(v: Volume, variant: str, severities, seed=0, out_dir=None):
    """Apply one artifact variant at each severity with a shared seed.

    Returns a list of (severity, volume) pairs; the severity parameter is the
    variant's main knob (chunk width, noise sigma, spike sigma, bias
    coefficient, ghosting alpha, zipper strip count). With `out_dir` set, each
    output is also written to disk and a manifest.json pairing severity to
    output path is emitted alongside.
    """
    severities = list(severities)
    if not severities:
        raise ValueError("severity grid is empty")
    results = []
    for s in severities:
        if variant == "chunk":
            out, _ = apply_chunk(v, int(s))
        elif variant == "gaussian":
            out = apply_gaussian_kspace(v, float(s), seed=seed)
        elif variant == "spike":
            out = apply_spike(v, float(s))
        elif variant == "bias":
            out = apply_bias_field(v, float(s))
        elif variant == "ghosting":
            out = apply_ghosting(v, float(s))
        elif variant == "zipper":
            out, _ = apply_zipper(v, int(s), seed=seed)
        elif variant == "sequence_swap":
            out = apply_sequence_swap(v)
        else:
            raise ValueError(f"unknown artifact variant {variant!r}")
        results.append((s, out))
    if out_dir is not None:
        import json
        from pathlib import Path

        from .volume import save_volume

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = []
        for s, vol in results:
            name = f"{variant}-{s:g}.vol"
            save_volume(vol, out_dir / name)
            manifest.append({"severity": s, "path": name})
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
    return results
