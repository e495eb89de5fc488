"""Desk-scale synthetic test subjects.

A phantom is an ellipsoidal "brain" filled with a smooth low-frequency
intensity field plus fine texture (so the high-pass guidance image is
informative), optionally carrying a spherical lesion as an additive intensity
offset, observed under Gaussian voxel noise inside the brain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

NOISE_STD = 0.1
BRAIN_SEMIAXES = (0.42, 0.40, 0.38)  # fractions of the half-extent per axis
FIELD_MEAN = 1.5
FIELD_RIPPLE = 0.3
TEXTURE_AMP = 0.2
TEXTURE_PERIOD_VOX = 2.8


@dataclass(frozen=True)
class LesionSpec:
    center: tuple
    radius: float
    offset: float = 4.0


@dataclass(frozen=True)
class Phantom:
    clean: Volume
    observed: Volume
    brain: np.ndarray
    truth: np.ndarray


def _unit_grid(dims):
    return np.meshgrid(
        *(np.linspace(-1.0, 1.0, n) for n in dims), indexing="ij", sparse=True
    )


def make_phantom(dims=(64, 64, 64), lesion: LesionSpec | None = None, seed=0) -> Phantom:
    """Build (clean, observed, brain, lesion-truth) for one synthetic subject."""
    dims = tuple(int(n) for n in dims)
    rng = np.random.default_rng(seed)
    u, v, w = _unit_grid(dims)
    a, b, c = BRAIN_SEMIAXES
    brain = (u / a) ** 2 + (v / b) ** 2 + (w / c) ** 2 <= 1.0

    # Smooth background: low-frequency ripple with seeded phases.
    p = rng.uniform(0, 2 * np.pi, size=2)
    smooth = FIELD_MEAN + FIELD_RIPPLE * (
        np.cos(np.pi * u + p[0]) * np.cos(np.pi * v + p[1]) + 0.5 * np.sin(np.pi * w)
    )
    # Fine texture: a high-frequency mode (period ~3 voxels) that survives the
    # r=15 high-pass, keeping the guidance image informative.
    q = rng.uniform(0, 2 * np.pi, size=3)
    f = [n / TEXTURE_PERIOD_VOX for n in dims]  # cycles per extent
    texture = TEXTURE_AMP * (
        np.sin(np.pi * f[0] * u + q[0])
        * np.sin(np.pi * f[1] * v + q[1])
        * np.sin(np.pi * f[2] * w + q[2])
    )
    clean_data = np.where(brain, smooth + texture, 0.0).astype(np.float32)
    clean = Volume(clean_data)

    truth = np.zeros(dims, dtype=bool)
    observed_data = clean_data.copy()
    if lesion is not None:
        idx = np.indices(dims)
        dist2 = sum((idx[i] - lesion.center[i]) ** 2 for i in range(3))
        sphere = dist2 <= lesion.radius**2
        center_voxel = tuple(int(round(x)) for x in lesion.center)
        if not brain[center_voxel]:
            raise ValueError("lesion center lies outside the brain")
        truth = sphere & brain
        observed_data[truth] += lesion.offset
    observed_data[brain] += rng.normal(0.0, NOISE_STD, size=int(brain.sum())).astype(
        np.float32
    )
    return Phantom(clean, Volume(observed_data), brain, truth)
