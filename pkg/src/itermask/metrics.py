"""Detection and segmentation metrics.

Detection: ROC/PR with explicit simultaneous-threshold tie handling so AUROC
equals the Mann-Whitney statistic with half credit for ties, plus FPR/FNR at
fixed TPR operating points. Segmentation: confusion-count overlap metrics,
exact-EDT average symmetric surface distance, and region PSNR.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .volume import Volume


def anomaly_score_mask(mask: np.ndarray) -> int:
    """Detection score: number of voxels flagged anomalous."""
    return int(np.asarray(mask, dtype=bool).sum())


def anomaly_score_error(e: Volume, brain: np.ndarray) -> float:
    """Baseline detection score: mean error over brain voxels."""
    brain = np.asarray(brain, dtype=bool)
    if not brain.any():
        raise ValueError("brain mask is empty")
    return float(e.data[brain].mean())


def _roc_points(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # Group equal scores: one simultaneous step per distinct threshold.
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    groups = np.split(sorted_labels, boundaries)
    tps = [0]
    fps = [0]
    for g in groups:
        tps.append(tps[-1] + int((g == 1).sum()))
        fps.append(fps[-1] + int((g == 0).sum()))
    tpr = np.array(tps) / n_pos
    fpr = np.array(fps) / n_neg
    return tpr, fpr, n_pos, n_neg


def roc_pr(labels, scores, tpr_targets=(0.8, 0.9)):
    """AUROC (trapezoidal over tie-grouped steps), AUPRC (step-wise, no
    interpolation), and FPR/FNR at the first operating point reaching each
    TPR target."""
    tpr, fpr, n_pos, n_neg = _roc_points(labels, scores)
    auroc = float(np.trapezoid(tpr, fpr))
    # Precision at each cut: TP / (TP + FP); AP = sum dRecall * precision.
    tp = tpr * n_pos
    fp = fpr * n_neg
    with np.errstate(invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 1.0)
    auprc = float(np.sum(np.diff(tpr) * precision[1:]))
    out = {"auroc": auroc, "auprc": auprc}
    for target in tpr_targets:
        idx = int(np.argmax(tpr >= target))
        pct = int(round(target * 100))
        out[f"fpr{pct}"] = float(fpr[idx])
        out[f"fnr{pct}"] = float(1.0 - tpr[idx])
    return out


def overlap_metrics(prediction: np.ndarray, truth: np.ndarray):
    """Dice, sensitivity, precision, Jaccard from confusion counts.

    Both-empty inputs score 1.0 by convention; degenerate denominators are
    reported in `flags` instead of silently defaulting.
    """
    prediction = np.asarray(prediction, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if prediction.shape != truth.shape:
        raise ValueError("dims mismatch")
    tp = int((prediction & truth).sum())
    fp = int((prediction & ~truth).sum())
    fn = int((~prediction & truth).sum())
    flags = []
    if tp + fp + fn == 0:
        flags.append("both masks empty: overlap metrics set to 1 by convention")
        return {"dsc": 1.0, "sensitivity": 1.0, "precision": 1.0, "jaccard": 1.0}, flags
    dsc = 2.0 * tp / (2.0 * tp + fp + fn)
    if tp + fn == 0:
        flags.append("empty truth: sensitivity undefined, reported 0")
    if tp + fp == 0:
        flags.append("empty prediction: precision undefined, reported 0")
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    jaccard = tp / (tp + fp + fn)
    return {
        "dsc": dsc,
        "sensitivity": sensitivity,
        "precision": precision,
        "jaccard": jaccard,
    }, flags


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Voxels of the set with at least one six-connected unset neighbor
    (out-of-bounds counts as unset)."""
    mask = np.asarray(mask, dtype=bool)
    interior = np.ones_like(mask)
    for axis in range(3):
        for shift in (1, -1):
            rolled = np.zeros_like(mask)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if shift == 1:
                src[axis], dst[axis] = slice(0, -1), slice(1, None)
            else:
                src[axis], dst[axis] = slice(1, None), slice(0, -1)
            rolled[tuple(dst)] = mask[tuple(src)]
            interior &= rolled
    return mask & ~interior


def assd(prediction: np.ndarray, truth: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    """Average symmetric surface distance in mm via exact Euclidean distance
    transforms between six-connectivity surfaces."""
    surf_p = surface_voxels(prediction)
    surf_t = surface_voxels(truth)
    if not surf_p.any() or not surf_t.any():
        raise ValueError("assd is undefined for an empty prediction or truth")
    dist_to_t = ndimage.distance_transform_edt(~surf_t, sampling=spacing)
    dist_to_p = ndimage.distance_transform_edt(~surf_p, sampling=spacing)
    total = float(dist_to_t[surf_p].sum() + dist_to_p[surf_t].sum())
    return total / (int(surf_p.sum()) + int(surf_t.sum()))


def psnr_region(x: Volume, x_pred: Volume, region: np.ndarray):
    """PSNR in dB over a region; peak is the region's max-min of the reference.

    Returns (psnr, flags). Zero reconstruction error yields +inf with a flag;
    a zero peak (constant reference region) is an error.
    """
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise ValueError("region is empty")
    ref = x.data[region].astype(np.float64)
    peak = float(ref.max() - ref.min())
    if peak == 0.0:
        raise ValueError("constant reference region: peak is zero")
    mse = float(((x_pred.data[region].astype(np.float64) - ref) ** 2).mean())
    if mse == 0.0:
        return math.inf, ["zero reconstruction error: PSNR is infinite"]
    return 10.0 * math.log10(peak**2 / mse), []
