"""End-to-end pipeline: normalize -> guidance -> threshold scan -> refine -> report.

Every run writes its artifacts into an output directory together with a run
manifest carrying the configuration hash and seed, so reruns are byte-for-byte
reproducible and artifacts are traceable to their configuration.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .reconstruct import External, HarmonicInpaint, Identity, MeanFill, PhantomOracle
from .refine import refine
from .spectral import high_frequency_image
from .threshold import scan_thresholds, select_tau_stop
from .volume import (
    Volume,
    derive_brain_mask,
    load_mask,
    load_volume,
    normalize_iterative_zscore,
    require_isotropic,
    save_mask,
    save_volume,
)

DEFAULT_RADIUS = 15.0
DETECTION_GAMMA = 0.01
SEGMENTATION_GAMMA = 0.05

STAGE_EXIT_CODES = {
    "load": 10,
    "normalize": 11,
    "guidance": 12,
    "threshold-scan": 13,
    "refine": 14,
    "evaluate": 15,
}


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.exit_code = STAGE_EXIT_CODES.get(stage, 1)


@dataclass
class PipelineConfig:
    input: str
    out_dir: str
    brain: str | None = None  # path to a brain mask; derived from |x|>0 if absent
    truth: str | None = None  # optional ground-truth mask for segmentation metrics
    radius: float = DEFAULT_RADIUS
    gamma: float | None = None  # resolved from mode when unset
    mode: str = "detection"  # detection | segmentation
    tau_stop: float | None = None  # fixed threshold; skips the scan when set
    max_iters: int = 200
    seed: int = 0
    reconstructor: str = "harmonic"  # identity|mean-fill|harmonic|oracle:<path>|external:<cmd>
    allow_anisotropic: bool = False
    skip_normalize: bool = False
    external_timeout_s: float = 300.0

    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return SEGMENTATION_GAMMA if self.mode == "segmentation" else DETECTION_GAMMA

    def semantic_fields(self) -> dict:
        # Fields that change the computation; output locations excluded.
        return {
            "input": self.input,
            "brain": self.brain,
            "truth": self.truth,
            "radius": self.radius,
            "gamma": self.resolved_gamma(),
            "mode": self.mode,
            "tau_stop": self.tau_stop,
            "max_iters": self.max_iters,
            "seed": self.seed,
            "reconstructor": self.reconstructor,
            "allow_anisotropic": self.allow_anisotropic,
            "skip_normalize": self.skip_normalize,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.semantic_fields(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def make_reconstructor(spec: str, workdir=None, timeout_s: float = 300.0):
    """Parse a reconstructor spec string into a reconstructor kind."""
    if spec == "identity":
        return Identity()
    if spec == "mean-fill":
        return MeanFill()
    if spec == "harmonic":
        return HarmonicInpaint()
    if spec.startswith("oracle:"):
        return PhantomOracle(load_volume(spec.split(":", 1)[1]))
    if spec.startswith("external:"):
        command = tuple(spec.split(":", 1)[1].split())
        return External(command, workdir=workdir, timeout_s=timeout_s)
    raise ValueError(f"unknown reconstructor spec {spec!r}")


def _stamp(payload: dict, config: PipelineConfig) -> dict:
    payload["config_hash"] = config.config_hash()
    payload["seed"] = config.seed
    return payload


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_pipeline(config: PipelineConfig) -> dict:
    """Run all stages; returns the report dict. Raises StageError on failure."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        x = load_volume(config.input)
        if not config.allow_anisotropic:
            require_isotropic(x)
        brain = load_mask(config.brain) if config.brain else derive_brain_mask(x)
        truth = load_mask(config.truth) if config.truth else None
    except Exception as exc:
        raise StageError("load", exc) from exc

    try:
        if config.skip_normalize:
            normalized = x
            report_norm = None
        else:
            normalized, report_norm = normalize_iterative_zscore(x, brain)
        save_volume(normalized, out / "normalized.vol")
    except StageError:
        raise
    except Exception as exc:
        raise StageError("normalize", exc) from exc

    try:
        guidance = high_frequency_image(normalized, config.radius)
        save_volume(guidance, out / "guidance.vol")
    except Exception as exc:
        raise StageError("guidance", exc) from exc

    kind = make_reconstructor(config.reconstructor, workdir=config.out_dir,
                              timeout_s=config.external_timeout_s)

    try:
        if config.tau_stop is None:
            samples, dice_trace = scan_thresholds(
                normalized, brain, kind, guidance, seed=config.seed, truth=truth
            )
            curve = select_tau_stop(samples, config.resolved_gamma(), dice_trace=dice_trace)
            tau_stop = curve.tau_stop
            _write_json(out / "curve.json", _stamp(curve.to_dict(), config))
        else:
            tau_stop = config.tau_stop
            curve = None
    except Exception as exc:
        raise StageError("threshold-scan", exc) from exc

    try:
        mask, trace, final_error = refine(
            normalized, brain, kind, guidance, tau_stop,
            seed=config.seed, max_iters=config.max_iters,
        )
        save_mask(mask, out / "mask.vol", x.spacing)
        _write_json(out / "trace.json", _stamp(trace.to_dict(), config))
    except Exception as exc:
        raise StageError("refine", exc) from exc

    try:
        report = {
            "anomaly_score": metrics.anomaly_score_mask(mask),
            "mean_error_score": metrics.anomaly_score_error(final_error, brain),
            "tau_stop": float(tau_stop),
            "terminated_reason": trace.terminated_reason,
            "iterations": len(trace.iterations),
            "flags": [],
        }
        if truth is not None and not truth.any():
            # lesion-free subject: segmentation metrics are not applicable
            report["flags"].append("empty ground truth: segmentation metrics omitted")
        elif truth is not None:
            overlap, flags = metrics.overlap_metrics(mask, truth)
            report.update(overlap)
            report["flags"].extend(flags)
            if mask.any():
                report["assd_mm"] = metrics.assd(mask, truth, x.spacing)
            else:
                report["assd_mm"] = None
                report["flags"].append("assd undefined for empty mask")
        _write_json(out / "report.json", _stamp(report, config))
        manifest = _stamp(
            {
                "artifacts": [
                    "normalized.vol", "guidance.vol", "mask.vol",
                    "trace.json", "report.json",
                ]
                + ([] if config.tau_stop is not None else ["curve.json"]),
                "config": config.semantic_fields(),
            },
            config,
        )
        _write_json(out / "run.json", manifest)
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    return report
