"""Random anisotropic-Gaussian mask synthesis for reconstruction training.

A mask spec is a random brain voxel as center, a covariance built from
uniform eigenvalues in [0.3, 10] and a Haar-uniform orthogonal basis, and an
upsample factor in [1, 4]. Realization samples 100k points from the Gaussian,
scales their displacements by the upsample factor, rounds to voxels, and
intersects with the brain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EIGENVALUE_RANGE = (0.3, 10.0)
UPSAMPLE_RANGE = (1.0, 4.0)
DEFAULT_N_POINTS = 100_000


@dataclass(frozen=True)
class GaussianMaskSpec:
    center: tuple
    covariance: np.ndarray
    n_points: int = DEFAULT_N_POINTS
    upsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (3, 3) or not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric 3x3")
        eig = np.linalg.eigvalsh(cov)
        lo, hi = EIGENVALUE_RANGE
        if eig.min() < lo - 1e-8 or eig.max() > hi + 1e-8:
            raise ValueError(f"covariance eigenvalues {eig} outside [{lo}, {hi}]")
        if not UPSAMPLE_RANGE[0] <= self.upsample <= UPSAMPLE_RANGE[1]:
            raise ValueError(f"upsample {self.upsample} outside {UPSAMPLE_RANGE}")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


def random_orthogonal(rng) -> np.ndarray:
    """Haar-uniform 3x3 orthogonal matrix via sign-corrected QR."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def sample_mask_spec(brain: np.ndarray, seed=0, n_points: int = DEFAULT_N_POINTS) -> GaussianMaskSpec:
    """Draw a mask spec: uniform center over brain voxels, random covariance,
    uniform upsample factor."""
    rng = np.random.default_rng(seed)
    brain = np.asarray(brain, dtype=bool)
    idx = np.argwhere(brain)
    if idx.size == 0:
        raise ValueError("brain mask is empty")
    center = idx[rng.integers(len(idx))]
    lam = rng.uniform(*EIGENVALUE_RANGE, size=3)
    basis = random_orthogonal(rng)
    cov = basis @ np.diag(lam) @ basis.T
    cov = (cov + cov.T) / 2.0
    upsample = float(rng.uniform(*UPSAMPLE_RANGE))
    realize_seed = int(rng.integers(0, 2**31 - 1))
    return GaussianMaskSpec(tuple(center), cov, n_points, upsample, realize_seed)


def realize_mask(spec: GaussianMaskSpec, brain: np.ndarray) -> np.ndarray:
    """Rasterize a mask spec: Gaussian point cloud -> voxel union -> brain."""
    brain = np.asarray(brain, dtype=bool)
    rng = np.random.default_rng(spec.seed)
    chol = np.linalg.cholesky(spec.covariance)
    displacements = rng.standard_normal((spec.n_points, 3)) @ chol.T
    points = np.asarray(spec.center) + spec.upsample * displacements
    ijk = np.rint(points).astype(np.int64)
    inside = np.all((ijk >= 0) & (ijk < np.array(brain.shape)), axis=1)
    mask = np.zeros(brain.shape, dtype=bool)
    ijk = ijk[inside]
    mask[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = True
    return mask & brain
