"""Subject-specific stopping-threshold estimation.

The scan shrinks the mask at a fixed 1%-of-brain rate, recording the error
threshold each step requires. A tangent model tau(t) = a*tan(b*t) is fitted
by least squares (closed-form amplitude, golden-section search over b) and
the stop threshold is the fitted value where the model derivative first
exceeds gamma. Poor fits (R^2 < 0.85) fall back to smoothed discrete
derivatives of the raw samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .reconstruct import ReconstructionRequest, reconstruct
from .refine import noise_filled
from .volume import Volume

FIT_WINDOW = 80
MIN_SAMPLES = 5
R_SQUARED_GATE = 0.85
SMOOTHING_WINDOW = 5
SHRINK_FRACTION = 0.01

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


class DegenerateFitError(ValueError):
    """All samples equal: R^2 is undefined unless the fit is exact."""


@dataclass(frozen=True)
class TangentFit:
    a: float
    b: float
    r_squared: float


@dataclass
class ThresholdCurve:
    samples: list
    gamma: float
    tau_stop: float
    method_used: str  # "tangent-fit" | "discrete-derivative"
    fit: TangentFit | None = None
    stop_iteration: int | None = None
    exhausted: bool = False  # no iteration cleared gamma; last tau returned
    dice_trace: list | None = None

    @property
    def r_squared(self):
        return self.fit.r_squared if self.fit else None

    def to_dict(self):
        return {
            "samples": [[int(t), float(tau)] for t, tau in self.samples],
            "gamma": self.gamma,
            "tau_stop": self.tau_stop,
            "method_used": self.method_used,
            "fit": None if self.fit is None else {"a": self.fit.a, "b": self.fit.b},
            "r_squared": self.r_squared,
            "stop_iteration": self.stop_iteration,
            "exhausted": self.exhausted,
            "dice_trace": self.dice_trace,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def scan_thresholds(x: Volume, brain: np.ndarray, kind, guidance: Volume, seed=0, truth=None):
    """Fixed-rate shrink scan: unmask exactly ceil(1% of brain) voxels per
    iteration (the smallest-error masked voxels, ties broken by voxel index)
    and record the threshold each step required, until the mask empties.

    Returns (samples, dice_trace); dice_trace is None unless a ground-truth
    mask is supplied for diagnostics.
    """
    brain = np.asarray(brain, dtype=bool)
    n_brain = int(brain.sum())
    if n_brain == 0:
        raise ValueError("brain mask is empty")
    k = math.ceil(SHRINK_FRACTION * n_brain)
    rng = np.random.default_rng(seed)
    mask = brain.copy()
    samples = []
    dice_trace = [] if truth is not None else None
    t = 1
    while mask.any():
        corrupted = noise_filled(x, mask, rng)
        request = ReconstructionRequest(corrupted, guidance, mask, brain, iteration=t - 1)
        predicted = reconstruct(kind, request)
        err = np.abs(predicted.data - x.data)

        flat = np.flatnonzero(mask)
        errs = err.flat[flat]
        m = min(k, flat.size)
        order = np.argsort(errs, kind="stable")[:m]  # stable sort = index tie-break
        tau = float(errs[order[m - 1]])
        mask.flat[flat[order]] = False
        samples.append((t, tau))
        if dice_trace is not None:
            inter = int((mask & truth).sum())
            denom = int(mask.sum()) + int(truth.sum())
            dice_trace.append(2.0 * inter / denom if denom else 1.0)
        t += 1
    return samples, dice_trace


def fit_tangent(samples) -> TangentFit:
    """Least-squares fit of tau(t) = a*tan(b*t) over the first 80 samples.

    For fixed b the optimal a is closed-form, so the search is 1D over
    b in (0, pi/(2*t_max)): a coarse grid bracket followed by golden-section
    refinement to 1e-6 relative tolerance.
    """
    if len(samples) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {len(samples)}")
    window = samples[: min(FIT_WINDOW, len(samples))]
    t = np.array([s[0] for s in window], dtype=np.float64)
    y = np.array([s[1] for s in window], dtype=np.float64)
    t_max = float(t.max())
    b_hi = (math.pi / 2.0) / t_max * (1.0 - 1e-9)

    def amplitude(b):
        g = np.tan(b * t)
        denom = float(g @ g)
        return float(y @ g) / denom if denom > 0 else 0.0

    def sse(b):
        g = np.tan(b * t)
        denom = float(g @ g)
        a = float(y @ g) / denom if denom > 0 else 0.0
        r = y - a * g
        return float(r @ r)

    # Coarse bracket, then golden-section refinement.
    grid = np.linspace(b_hi * 1e-6, b_hi, 129)
    values = [sse(b) for b in grid]
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    b = _golden_section(sse, float(lo), float(hi), 1e-6 * b_hi)
    a = amplitude(b)

    ss_res = sse(b)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        if ss_res <= 1e-24:
            return TangentFit(a, b, 1.0)
        raise DegenerateFitError("all samples equal; tangent fit is not exact")
    return TangentFit(a, b, 1.0 - ss_res / ss_tot)


def _golden_section(f, lo, hi, tol):
    h = hi - lo
    if h <= tol:
        return (lo + hi) / 2.0
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = lo + INV_PHI2 * h
    d = lo + INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n - 1):
        if yc < yd:
            hi, d, yd = d, c, yc
            h *= INV_PHI
            c = lo + INV_PHI2 * h
            yc = f(c)
        else:
            lo, c, yc = c, d, yd
            h *= INV_PHI
            d = lo + INV_PHI * h
            yd = f(d)
    return (lo + hi) / 2.0


def smoothed_discrete_derivative(taus):
    """Forward differences smoothed with a centered moving average (window 5,
    truncated at the edges)."""
    d = np.diff(np.asarray(taus, dtype=np.float64))
    kernel = np.ones(SMOOTHING_WINDOW)
    return np.convolve(d, kernel, mode="same") / np.convolve(
        np.ones_like(d), kernel, mode="same"
    )


def select_tau_stop(samples, gamma: float, dice_trace=None) -> ThresholdCurve:
    """Pick the stopping threshold from scan samples.

    Tangent path (R^2 >= 0.85): smallest sampled t in the fit window whose
    model derivative a*b*sec^2(b*t) exceeds gamma; tau_stop is the fitted
    value there. Otherwise: smallest t whose smoothed discrete derivative
    exceeds gamma; tau_stop is the raw sample there. If nothing qualifies the
    last sampled tau is returned with `exhausted` set.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    taus = [s[1] for s in samples]
    try:
        fit = fit_tangent(samples)
    except DegenerateFitError:
        fit = None

    if fit is not None and fit.r_squared >= R_SQUARED_GATE:
        # The fitted curve extrapolates: search integer t up to the model pole,
        # where the derivative diverges, not just the sampled range.
        t = 1
        while fit.b * t < math.pi / 2.0:
            deriv = fit.a * fit.b / math.cos(fit.b * t) ** 2
            if deriv > gamma:
                return ThresholdCurve(
                    samples, gamma, fit.a * math.tan(fit.b * t), "tangent-fit",
                    fit=fit, stop_iteration=t, dice_trace=dice_trace,
                )
            t += 1
        return ThresholdCurve(
            samples, gamma, taus[-1], "tangent-fit",
            fit=fit, exhausted=True, dice_trace=dice_trace,
        )

    smoothed = smoothed_discrete_derivative(taus)
    for i, (t, tau) in enumerate(samples[:-1]):
        if smoothed[i] > gamma:
            return ThresholdCurve(
                samples, gamma, tau, "discrete-derivative",
                fit=fit, stop_iteration=t, dice_trace=dice_trace,
            )
    return ThresholdCurve(
        samples, gamma, taus[-1], "discrete-derivative",
        fit=fit, exhausted=True, dice_trace=dice_trace,
    )
