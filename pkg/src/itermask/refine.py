"""Iterative spatial mask refinement: the core test-time loop.

Starting from a mask covering the whole brain, each iteration fills the
masked region with fresh seeded noise, reconstructs it, and re-thresholds the
reconstruction error over all brain voxels. The loop ends when the mask size
changes by less than 1% between iterations, when the mask empties, or at the
iteration cap. The final mask is the anomaly segmentation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .reconstruct import ReconstructionError, ReconstructionRequest, reconstruct
from .volume import Volume

RELATIVE_CHANGE_STOP = 0.01
DEFAULT_MAX_ITERS = 200


@dataclass(frozen=True)
class IterationRecord:
    t: int
    masked_voxels: int
    threshold_used: float
    mean_error_in_mask: float


@dataclass
class RefinementTrace:
    iterations: list = field(default_factory=list)
    terminated_reason: str = "max_iters"

    def to_dict(self):
        return {
            "iterations": [
                {
                    "t": r.t,
                    "masked_voxels": r.masked_voxels,
                    "threshold_used": r.threshold_used,
                    "mean_error_in_mask": r.mean_error_in_mask,
                }
                for r in self.iterations
            ],
            "terminated_reason": self.terminated_reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def error_map(x: Volume, x_pred: Volume) -> Volume:
    """Per-voxel absolute reconstruction error."""
    if x.dims != x_pred.dims:
        raise ValueError("dims mismatch")
    return x.with_data(np.abs(x_pred.data - x.data))


def update_mask(e: Volume, tau: float, brain: np.ndarray) -> np.ndarray:
    """Keep brain voxels whose error is >= tau masked; unmask errors below tau.

    Evaluated over all brain voxels, so previously unmasked voxels whose error
    rises above tau are re-masked. Voxels outside the brain are never masked.
    """
    if not np.isfinite(tau) and not tau == np.inf:
        raise ValueError("tau must be finite or +inf")
    return np.asarray(brain, dtype=bool) & ~(e.data < tau)


def noise_filled(x: Volume, mask: np.ndarray, rng) -> Volume:
    """Standard-normal noise under the mask, original image elsewhere."""
    noise = rng.standard_normal(x.dims).astype(np.float32)
    return x.with_data(np.where(mask, noise, x.data))


def refine(
    x: Volume,
    brain: np.ndarray,
    kind,
    guidance: Volume,
    tau_stop: float,
    seed=0,
    max_iters: int = DEFAULT_MAX_ITERS,
):
    """Run the refinement loop; returns (final mask, trace, final error map)."""
    if not tau_stop > 0:
        raise ValueError("tau_stop must be > 0")
    if guidance.dims != x.dims:
        raise ValueError("guidance dims mismatch")
    brain = np.asarray(brain, dtype=bool)
    rng = np.random.default_rng(seed)
    trace = RefinementTrace()
    mask = brain.copy()
    prev_size = int(mask.sum())
    final_error = x.with_data(np.zeros(x.dims, dtype=np.float32))

    if prev_size == 0:
        trace.terminated_reason = "mask_empty"
        return mask, trace, final_error

    for t in range(max_iters):
        corrupted = noise_filled(x, mask, rng)
        request = ReconstructionRequest(corrupted, guidance, mask, brain, iteration=t)
        try:
            predicted = reconstruct(kind, request)
        except ReconstructionError as exc:
            raise ReconstructionError(f"iteration {t}: {exc}") from exc
        final_error = error_map(x, predicted)
        mean_in_mask = float(final_error.data[mask].mean())
        mask = update_mask(final_error, tau_stop, brain)
        size = int(mask.sum())
        trace.iterations.append(IterationRecord(t, size, float(tau_stop), mean_in_mask))
        if size == 0:
            trace.terminated_reason = "mask_empty"
            break
        if abs(size - prev_size) / prev_size < RELATIVE_CHANGE_STOP:
            trace.terminated_reason = "converged"
            break
        prev_size = size
    else:
        trace.terminated_reason = "max_iters"

    return mask, trace, final_error
