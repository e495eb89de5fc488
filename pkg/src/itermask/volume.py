"""Volume containers, raw/NIfTI-1 file I/O, and intensity preprocessing.

A volume is a dense 3D scalar field with millimetre voxel spacing. The
canonical on-disk format is a little-endian payload (`.vol`) plus a JSON
sidecar carrying dims, spacing, and dtype. A minimal single-file NIfTI-1
reader/writer (`.nii`) is provided for interoperability.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class VolumeFormatError(ValueError):
    """Raised when a volume file or header cannot be interpreted."""


SIDECAR_DTYPES = {"f32": np.dtype("<f4"), "i16": np.dtype("<i2"), "u8": np.dtype("u1")}

NIFTI_HEADER_SIZE = 348
NIFTI_DT_INT16 = 4
NIFTI_DT_FLOAT32 = 16


@dataclass(frozen=True)
class Volume:
    """Dense 3D scalar field (float32 semantics) with voxel spacing in mm."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"volume data must be 3D with all dims >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume contains non-finite values")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self):
        return self.data.shape

    def with_data(self, data) -> "Volume":
        return Volume(data, self.spacing)


@dataclass(frozen=True)
class NormalizationReport:
    """Per-pass statistics applied by iterative z-score normalization."""

    mean_history: tuple
    std_history: tuple

    @property
    def passes(self) -> int:
        return len(self.mean_history)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_volume(v: Volume, path) -> None:
    """Write a volume as little-endian payload + JSON sidecar, or NIfTI-1 for `.nii`."""
    path = Path(path)
    if path.suffix == ".nii":
        _save_nifti(v, path)
        return
    _save_raw(v.data.astype("<f4"), v.spacing, path, "f32")


def save_mask(bits: np.ndarray, path, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a boolean mask as a uint8 {0,1} payload + sidecar."""
    _save_raw(np.asarray(bits, dtype=bool).astype("u1"), spacing, Path(path), "u8")


def _save_raw(arr, spacing, path: Path, dtype_tag: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr.tofile(path)
    sidecar = {
        "dims": [int(n) for n in arr.shape],
        "spacing": [float(s) for s in spacing],
        "dtype": dtype_tag,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_volume(path, fmt=None) -> Volume:
    """Load a volume from raw+sidecar or NIfTI-1 file.

    Format is inferred from the extension (`.nii` vs anything else) unless
    `fmt` is one of "raw" / "nifti1". int16 payloads are widened to float32.
    """
    path = Path(path)
    if not path.exists():
        raise VolumeFormatError(f"no such file: {path}")
    if fmt is None:
        fmt = "nifti1" if path.suffix == ".nii" else "raw"
    if fmt == "nifti1":
        return _load_nifti(path)
    if fmt == "raw":
        arr, spacing = _load_raw(path)
        return Volume(arr.astype(np.float32), spacing)
    raise VolumeFormatError(f"unknown format {fmt!r}")


def load_mask(path) -> np.ndarray:
    """Load a uint8 mask payload as a boolean grid."""
    arr, _ = _load_raw(Path(path))
    return arr.astype(bool)


def _load_raw(path: Path):
    sidecar_file = _sidecar_path(path)
    if not sidecar_file.exists():
        raise VolumeFormatError(f"missing sidecar: {sidecar_file}")
    try:
        meta = json.loads(sidecar_file.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"malformed sidecar {sidecar_file}: {exc}") from exc
    for key in ("dims", "spacing", "dtype"):
        if key not in meta:
            raise VolumeFormatError(f"sidecar {sidecar_file} missing key {key!r}")
    dims = tuple(int(n) for n in meta["dims"])
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"bad dims in sidecar: {meta['dims']}")
    if meta["dtype"] not in SIDECAR_DTYPES:
        raise VolumeFormatError(f"unsupported dtype {meta['dtype']!r}")
    dtype = SIDECAR_DTYPES[meta["dtype"]]
    expected = math.prod(dims) * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise VolumeFormatError(
            f"{path}: payload is {actual} bytes, dims {dims} require {expected}"
        )
    arr = np.fromfile(path, dtype=dtype).reshape(dims)
    spacing = tuple(float(s) for s in meta["spacing"])
    return arr, spacing


def _load_nifti(path: Path) -> Volume:
    raw = path.read_bytes()
    if len(raw) < NIFTI_HEADER_SIZE:
        raise VolumeFormatError(f"{path}: shorter than a NIfTI-1 header")
    header = raw[:NIFTI_HEADER_SIZE]
    for endian in ("<", ">"):
        if struct.unpack(endian + "i", header[:4])[0] == NIFTI_HEADER_SIZE:
            break
    else:
        raise VolumeFormatError(f"{path}: sizeof_hdr != 348 in either byte order")
    if header[344:348] != b"n+1\x00":
        raise VolumeFormatError(f"{path}: bad magic {header[344:348]!r}")
    dim = struct.unpack(endian + "8h", header[40:56])
    ndim = dim[0]
    if not 3 <= ndim <= 7 or any(d != 1 for d in dim[4 : 1 + ndim]):
        raise VolumeFormatError(f"{path}: only 3D images supported, dim={dim}")
    dims = tuple(int(d) for d in dim[1:4])
    if min(dims) < 1:
        raise VolumeFormatError(f"{path}: bad dims {dims}")
    datatype = struct.unpack(endian + "h", header[70:72])[0]
    if datatype == NIFTI_DT_FLOAT32:
        dtype = np.dtype(endian + "f4")
    elif datatype == NIFTI_DT_INT16:
        dtype = np.dtype(endian + "i2")
    else:
        raise VolumeFormatError(f"{path}: unsupported datatype {datatype}")
    pixdim = struct.unpack(endian + "8f", header[76:108])
    spacing = tuple(abs(float(p)) or 1.0 for p in pixdim[1:4])
    vox_offset = int(struct.unpack(endian + "f", header[108:112])[0])
    n = math.prod(dims)
    payload = raw[vox_offset : vox_offset + n * dtype.itemsize]
    if len(payload) != n * dtype.itemsize:
        raise VolumeFormatError(f"{path}: payload truncated (dims {dims})")
    # NIfTI stores the first index fastest; keep (nx, ny, nz) indexing.
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims[::-1]).transpose(2, 1, 0)
    return Volume(arr.astype(np.float32), spacing)


def _save_nifti(v: Volume, path: Path) -> None:
    header = bytearray(NIFTI_HEADER_SIZE)
    struct.pack_into("<i", header, 0, NIFTI_HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, *v.dims, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, NIFTI_DT_FLOAT32)
    struct.pack_into("<h", header, 72, 32)
    struct.pack_into("<8f", header, 76, 1.0, *v.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", header, 108, float(NIFTI_HEADER_SIZE + 4))
    header[344:348] = b"n+1\x00"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * 4)  # extension flag
        fh.write(v.data.transpose(2, 1, 0).astype("<f4").tobytes())


def derive_brain_mask(v: Volume, threshold: float = 0.0) -> np.ndarray:
    """Foreground mask: voxels with |value| > threshold."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return np.abs(v.data) > threshold


def require_isotropic(v: Volume, tol: float = 1e-6) -> None:
    """Reject volumes whose header spacing is not 1 mm isotropic."""
    if any(abs(s - 1.0) > tol for s in v.spacing):
        raise ValueError(
            f"spacing {v.spacing} is not 1 mm isotropic; resample upstream "
            "or pass allow_anisotropic"
        )


def normalize_iterative_zscore(v: Volume, brain: np.ndarray, n_refine_passes: int = 3):
    """Iterative z-score normalization restricted to the brain region.

    Pass 0 z-scores the brain voxels. Each refinement pass recomputes the
    mean/std over brain voxels within +-3 std of the current distribution and
    re-normalizes every brain voxel with those statistics. Only statistics are
    clipped; voxel values are never clamped. Background voxels are untouched.

    Returns the normalized volume and a report with one (mean, std) entry per
    pass (1 + n_refine_passes entries).
    """
    brain = np.asarray(brain, dtype=bool)
    if brain.shape != v.dims:
        raise ValueError("brain mask dims do not match volume")
    if not brain.any():
        raise ValueError("brain mask is empty")
    vals = v.data[brain].astype(np.float64)
    means, stds = [], []

    mu, sd = float(vals.mean()), float(vals.std())
    if sd <= 0.0:
        raise ValueError("constant brain region cannot be normalized")
    vals = (vals - mu) / sd
    means.append(mu)
    stds.append(sd)

    for _ in range(n_refine_passes):
        mu_c, sd_c = vals.mean(), vals.std()
        keep = np.abs(vals - mu_c) <= 3.0 * sd_c
        if not keep.any():
            raise ValueError("clipping removed every brain voxel")
        mu, sd = float(vals[keep].mean()), float(vals[keep].std())
        if sd <= 0.0:
            raise ValueError("degenerate brain region after outlier clipping")
        vals = (vals - mu) / sd
        means.append(mu)
        stds.append(sd)

    out = v.data.copy()
    out[brain] = vals.astype(np.float32)
    return v.with_data(out), NormalizationReport(tuple(means), tuple(stds))


def crop_or_pad(v: Volume, target=(192, 192, 192)) -> Volume:
    """Crop/zero-pad to `target` dims with the foreground centroid at the center.

    The centroid of |v| > 0 is mapped (after rounding) onto target//2; regions
    falling outside the input are zero-filled. An all-zero volume is cropped
    about its geometric center.
    """
    target = tuple(int(t) for t in target)
    if len(target) != 3 or min(target) < 1:
        raise ValueError(f"bad target dims {target}")
    fg = np.abs(v.data) > 0
    if fg.any():
        centroid = np.array(np.nonzero(fg)).mean(axis=1)
        center = np.rint(centroid).astype(int)
    else:
        center = np.array(v.dims) // 2
    start = center - np.array(target) // 2
    out = np.zeros(target, dtype=np.float32)
    src_lo = np.maximum(start, 0)
    src_hi = np.minimum(start + np.array(target), np.array(v.dims))
    if np.all(src_lo < src_hi):
        dst_lo = src_lo - start
        dst_hi = dst_lo + (src_hi - src_lo)
        out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = v.data[
            src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
        ]
    return Volume(out, v.spacing)
