"""Pluggable reconstructors: analytic built-ins and the external-process client.

Every reconstructor obeys the same contract: only masked voxels are
predicted; voxels outside the mask are returned bit-exactly from the
corrupted input. Built-ins stand in for a trained model so the refinement
logic can be exercised and verified analytically.
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
import tempfile
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume import Volume, derive_brain_mask, load_volume, save_mask, save_volume


class ReconstructionError(RuntimeError):
    pass


class ExternalModelError(ReconstructionError):
    pass


@dataclass(frozen=True)
class ReconstructionRequest:
    corrupted: Volume
    guidance: Volume
    mask: np.ndarray
    brain: np.ndarray
    iteration: int = 0  # protocol metadata for external models

    def __post_init__(self):
        dims = self.corrupted.dims
        if self.guidance.dims != dims or self.mask.shape != dims or self.brain.shape != dims:
            raise ValueError("request fields must share dims")
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        object.__setattr__(self, "brain", np.asarray(self.brain, dtype=bool))
        if np.any(self.mask & ~self.brain):
            raise ValueError("mask must be a subset of the brain mask")


@dataclass(frozen=True)
class Identity:
    """Returns the corrupted input unchanged (adversarial floor)."""


@dataclass(frozen=True)
class MeanFill:
    """Masked voxels set to the mean of unmasked brain voxels (0 if none)."""


@dataclass(frozen=True)
class HarmonicInpaint:
    """Masked voxels solve the discrete Laplace equation (Gauss-Seidel) with
    unmasked voxels as Dirichlet boundary, then the guidance volume is added
    inside the mask to restore the fine structure the smooth solution lacks."""

    tol: float = 1e-4
    max_sweeps: int = 10_000


@dataclass(frozen=True)
class PhantomOracle:
    """Masked voxels copied from a stored clean volume (exact-answer oracle)."""

    clean: Volume


@dataclass(frozen=True)
class External:
    """Child-process model speaking the request-directory file protocol."""

    command: tuple
    workdir: str | None = None
    timeout_s: float = 300.0

    def __post_init__(self):
        cmd = tuple(str(c) for c in self.command)
        if not cmd:
            raise ValueError("external command must be nonempty")
        object.__setattr__(self, "command", cmd)


def reconstruct(kind, req: ReconstructionRequest) -> Volume:
    """Predict masked voxels with the given reconstructor; pass the rest through."""
    if isinstance(kind, Identity):
        predicted = req.corrupted.data
    elif isinstance(kind, MeanFill):
        reference = req.brain & ~req.mask
        fill = float(req.corrupted.data[reference].mean()) if reference.any() else 0.0
        predicted = np.full(req.corrupted.dims, fill, dtype=np.float32)
    elif isinstance(kind, HarmonicInpaint):
        harmonic = _solve_laplace(req.corrupted.data, req.mask, kind.tol, kind.max_sweeps)
        predicted = harmonic + req.guidance.data
    elif isinstance(kind, PhantomOracle):
        if kind.clean.dims != req.corrupted.dims:
            raise ReconstructionError("oracle clean volume dims mismatch")
        predicted = kind.clean.data
    elif isinstance(kind, External):
        predicted = _external_predict(kind, req)
    else:
        raise TypeError(f"unknown reconstructor kind {kind!r}")

    out = req.corrupted.data.copy()
    out[req.mask] = np.asarray(predicted, dtype=np.float32)[req.mask]
    return req.corrupted.with_data(out)


def _solve_laplace(values: np.ndarray, mask: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    """Red-black Gauss-Seidel Laplace solve inside the mask, Dirichlet outside.

    Out-of-volume neighbors are excluded from the stencil averages. Stops when
    the largest per-sweep update drops below tol; raises if the sweep cap is
    reached first. The initial guess comes from a recursively coarsened solve
    (the converged solution does not depend on it; it only cuts sweep count).
    """
    if not mask.any():
        return values.astype(np.float64)
    # Work on the mask bounding box padded by one voxel: all stencil neighbors live there.
    lo, hi = [], []
    for axis in range(3):
        nz = np.any(mask, axis=tuple(a for a in range(3) if a != axis))
        idx = np.flatnonzero(nz)
        lo.append(max(int(idx[0]) - 1, 0))
        hi.append(min(int(idx[-1]) + 2, mask.shape[axis]))
    box = tuple(slice(l, h) for l, h in zip(lo, hi))
    out = values.astype(np.float64)
    out[box] = _gauss_seidel_box(values[box].astype(np.float64), mask[box], tol, max_sweeps)
    return out


def _coarse_initial_guess(u: np.ndarray, m: np.ndarray, tol: float, max_sweeps: int):
    coarse_u = _gauss_seidel_box(u[::2, ::2, ::2].copy(), m[::2, ::2, ::2], tol * 4, max_sweeps)
    up = np.repeat(np.repeat(np.repeat(coarse_u, 2, 0), 2, 1), 2, 2)
    return up[tuple(slice(0, n) for n in u.shape)]


def _gauss_seidel_box(u: np.ndarray, m: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    if not m.any():
        return u
    if min(u.shape) >= 8:
        u[m] = _coarse_initial_guess(u, m, tol, max_sweeps)[m]
    else:
        u[m] = 0.0

    shape = u.shape
    count = np.zeros(shape)
    nb_sum = np.empty(shape)
    grids = np.indices(shape).sum(axis=0)
    colors = [m & (grids % 2 == 0), m & (grids % 2 == 1)]

    for axis in range(3):
        inner = [slice(None)] * 3
        inner[axis] = slice(0, -1)
        count[tuple(inner)] += 1
        inner[axis] = slice(1, None)
        count[tuple(inner)] += 1

    def accumulate_neighbors(dst):
        dst.fill(0.0)
        for axis in range(3):
            src = [slice(None)] * 3
            dstx = [slice(None)] * 3
            src[axis] = slice(1, None)
            dstx[axis] = slice(0, -1)
            dst[tuple(dstx)] += u[tuple(src)]
            src[axis] = slice(0, -1)
            dstx[axis] = slice(1, None)
            dst[tuple(dstx)] += u[tuple(src)]

    delta = math.inf
    for _ in range(max_sweeps):
        delta = 0.0
        for color in colors:
            accumulate_neighbors(nb_sum)
            new = nb_sum[color] / count[color]
            step = np.abs(new - u[color]).max() if new.size else 0.0
            delta = max(delta, float(step))
            u[color] = new
        if delta < tol:
            return u
    raise ReconstructionError(
        f"harmonic inpainting did not converge within {max_sweeps} sweeps (last update {delta:.3e})"
    )


def _external_predict(kind: External, req: ReconstructionRequest) -> np.ndarray:
    base = Path(kind.workdir) if kind.workdir else Path(tempfile.gettempdir())
    request_id = f"req-{uuid.uuid4()}"
    reqdir = base / request_id
    reqdir.mkdir(parents=True)
    save_volume(req.corrupted, reqdir / "corrupted.vol")
    save_volume(req.guidance, reqdir / "guidance.vol")
    save_mask(req.mask, reqdir / "mask.vol", req.corrupted.spacing)
    (reqdir / "manifest.json").write_text(
        json.dumps(
            {
                "request_id": request_id,
                "dims": [int(n) for n in req.corrupted.dims],
                "iteration": int(req.iteration),
            },
            sort_keys=True,
        )
        + "\n"
    )
    try:
        proc = subprocess.run(
            [*kind.command, str(reqdir)],
            capture_output=True,
            timeout=kind.timeout_s,
            text=True,
        )
    except subprocess.TimeoutExpired as exc:
        raise ExternalModelError(f"external model timed out after {kind.timeout_s}s") from exc
    except OSError as exc:
        raise ExternalModelError(f"could not launch {kind.command}: {exc}") from exc
    if proc.returncode != 0:
        raise ExternalModelError(
            f"external model exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    pred_path = reqdir / "prediction.vol"
    if not pred_path.exists():
        raise ExternalModelError(f"external model wrote no prediction: {pred_path}")
    prediction = load_volume(pred_path)
    if prediction.dims != req.corrupted.dims:
        raise ExternalModelError(
            f"prediction dims {prediction.dims} != request dims {req.corrupted.dims}"
        )
    shutil.rmtree(reqdir, ignore_errors=True)
    return prediction.data


def training_pair(clean: Volume, guidance: Volume, mask: np.ndarray, seed=0, brain=None):
    """Emit one (request, target) training example: standard-normal noise under
    the mask, clean image elsewhere, target = clean."""
    mask = np.asarray(mask, dtype=bool)
    if brain is None:
        brain = derive_brain_mask(clean)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(clean.dims).astype(np.float32)
    corrupted = np.where(mask, noise, clean.data)
    request = ReconstructionRequest(clean.with_data(corrupted), guidance, mask, brain)
    return request, clean
