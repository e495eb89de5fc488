"""Iterative mask-refinement anomaly detection and segmentation for 3D volumes."""

from .volume import (
    NormalizationReport,
    Volume,
    VolumeFormatError,
    crop_or_pad,
    derive_brain_mask,
    load_mask,
    load_volume,
    normalize_iterative_zscore,
    save_mask,
    save_volume,
)
from .spectral import HighPassSpec, SpectralField, amplitude_phase, dft_forward, dft_inverse, high_frequency_image
from .maskgen import GaussianMaskSpec, realize_mask, sample_mask_spec
from .reconstruct import (
    External,
    ExternalModelError,
    HarmonicInpaint,
    Identity,
    MeanFill,
    PhantomOracle,
    ReconstructionError,
    ReconstructionRequest,
    reconstruct,
    training_pair,
)
from .refine import RefinementTrace, error_map, refine, update_mask
from .threshold import ThresholdCurve, fit_tangent, scan_thresholds, select_tau_stop
from .phantom import LesionSpec, Phantom, make_phantom

__version__ = "0.1.0"
