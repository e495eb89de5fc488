"""Acceptance suite: one test per criterion, printed as one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s`. Tolerances are fixed here,
not tuned at runtime. Criteria that leave the reconstructor open state their
choice inline.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from itermask.artifacts import (
    apply_bias_field,
    apply_chunk,
    apply_gaussian_kspace,
    apply_ghosting,
    apply_sequence_swap,
    apply_spike,
    apply_zipper,
)
from itermask.cli import main as cli_main
from itermask.metrics import assd, overlap_metrics, roc_pr
from itermask.phantom import LesionSpec, make_phantom
from itermask.reconstruct import Identity, MeanFill, PhantomOracle
from itermask.refine import refine
from itermask.spectral import dft_forward, dft_inverse, high_frequency_image
from itermask.threshold import scan_thresholds, select_tau_stop
from itermask.volume import Volume

from conftest import dice, random_volume, sphere_mask
from test_metrics import assd_pairwise_oracle, auroc_pairwise_oracle
from test_spectral import naive_dft


@contextmanager
def criterion(tag, description):
    try:
        yield
    except Exception:
        print(f"[{tag}] FAIL  {description}")
        raise
    print(f"[{tag}] PASS  {description}")


def a3_phantom(seed):
    return make_phantom((64, 64, 64), LesionSpec((32, 32, 32), 8.0, 4.0), seed=seed)


def test_a1_spectral_correctness():
    with criterion("A1", "DFT matches naive O(N^2) oracle; 32^3 round trip"):
        start = time.monotonic()
        rng = np.random.default_rng(11)
        for _ in range(20):
            v = random_volume(rng, (4, 4, 4))
            got = dft_forward(v).coeffs
            expected = naive_dft(v.data.astype(np.float64))
            assert np.abs(got - expected).max() < 1e-5
        v32 = random_volume(rng, (32, 32, 32))
        back = dft_inverse(dft_forward(v32))
        assert np.abs(back.data - v32.data).max() < 1e-4
        assert time.monotonic() - start < 5.0


def test_a2_high_pass_filter():
    with criterion("A2", "constant -> 0 for r in {0,5,15}; Parseval + idempotence"):
        for r in (0.0, 5.0, 15.0):
            const = Volume(np.full((16, 16, 16), 2.5, dtype=np.float32))
            assert np.abs(high_frequency_image(const, r).data).max() < 1e-5
        rng = np.random.default_rng(22)
        for _ in range(10):
            v = random_volume(rng, (16, 16, 16))
            coeffs = dft_forward(v).coeffs
            spatial = float((v.data.astype(np.float64) ** 2).sum())
            spectral = float((np.abs(coeffs) ** 2).sum()) / v.data.size
            assert abs(spatial - spectral) < 1e-5 * spatial
            once = high_frequency_image(v, 3.0)
            twice = high_frequency_image(once, 3.0)
            assert np.abs(once.data - twice.data).max() < 1e-4


def test_a3_phantom_segmentation():
    with criterion("A3", "oracle + threshold-select (gamma=0.5): median Dice >= 0.90"):
        start = time.monotonic()
        dices = []
        for seed in range(10):
            ph = a3_phantom(seed)
            guidance = high_frequency_image(ph.observed, 15.0)
            kind = PhantomOracle(ph.clean)
            samples, _ = scan_thresholds(ph.observed, ph.brain, kind, guidance, seed=seed)
            # gamma scaled for phantom error magnitudes (noise std 0.1, offset 4)
            curve = select_tau_stop(samples, gamma=0.5)
            mask, _, _ = refine(ph.observed, ph.brain, kind, guidance, curve.tau_stop, seed=seed)
            dices.append(dice(mask, ph.truth))
        assert float(np.median(dices)) >= 0.90
        assert time.monotonic() - start < 60.0


def test_a4_threshold_dynamics_shape():
    # Reconstructor: oracle with a uniform -0.8 intensity bias, modeling a
    # model whose normal-tissue errors sit at a constant floor (|0.8 + noise|)
    # while anomaly errors stay near the lesion offset. The criterion is about
    # the scan's curve shape in exactly that regime.
    with criterion("A4", "scan curve flat (CoV<0.2) until brain-lesion boundary, then >=5x jump"):
        for seed in (0, 1):
            ph = a3_phantom(seed)
            guidance = high_frequency_image(ph.observed, 15.0)
            biased = PhantomOracle(Volume(ph.clean.data - 0.8, ph.clean.spacing))
            samples, _ = scan_thresholds(ph.observed, ph.brain, biased, guidance, seed=seed)
            taus = np.array([tau for _, tau in samples])
            n_brain = int(ph.brain.sum())
            n_lesion = int(ph.truth.sum())
            k = math.ceil(0.01 * n_brain)
            # flat until cumulative unmasked reaches (|brain| - |lesion|), with
            # a 2% tolerance on that boundary
            t_pre = math.floor(0.98 * (n_brain - n_lesion) / k)
            pre = taus[:t_pre]
            cov = float(pre.std() / pre.mean())
            assert cov < 0.2, f"CoV {cov:.3f}"
            assert taus[-1] > 5.0 * float(np.median(pre))
            # the jump must not begin before the tolerance window either
            onset = int(np.argmax(taus > 5.0 * float(np.median(pre))))
            assert abs(onset * k - (n_brain - n_lesion)) <= 0.02 * n_brain + k


def test_a5_tangent_fit_recovery():
    with criterion("A5", "noisy tangent fit: 10% params, r2 gate, +-1 stopping iteration"):
        a_true, b_true, gamma = 0.05, 0.012, 0.01
        rng_master = np.random.default_rng(33)
        errs_a, errs_b, gate_hits = [], [], 0
        for _ in range(50):
            rng = np.random.default_rng(int(rng_master.integers(2**31)))
            samples = [
                (t, a_true * math.tan(b_true * t) + rng.normal(0.0, 0.002))
                for t in range(1, 81)
            ]
            curve = select_tau_stop(samples, gamma)
            fit = curve.fit
            errs_a.append(abs(fit.a - a_true) / a_true)
            errs_b.append(abs(fit.b - b_true) / b_true)
            if fit.r_squared >= 0.85:
                gate_hits += 1
                assert curve.method_used == "tangent-fit"
                t_star = math.acos(math.sqrt(fit.a * fit.b / gamma)) / fit.b
                assert abs(curve.stop_iteration - math.ceil(t_star)) <= 1
        assert float(np.median(errs_a)) < 0.10
        assert float(np.median(errs_b)) < 0.10
        assert gate_hits >= 45


def test_a6_fallback_path():
    with criterion("A6", "non-tangent jump: r2 < 0.85 and fallback hits jump within +-3, 10/10"):
        hits = 0
        for case in range(10):
            t_jump = 52 + case
            rng = np.random.default_rng(1000 + case)
            samples = []
            for t in range(1, 101):
                base = 0.001 * t + (1.0 if t >= t_jump else 0.0)
                samples.append((t, base + rng.normal(0.0, 0.0005)))
            curve = select_tau_stop(samples, gamma=0.05)
            assert curve.r_squared < 0.85
            assert curve.method_used == "discrete-derivative"
            if abs(curve.stop_iteration - t_jump) <= 3:
                hits += 1
        assert hits == 10


def test_a7_artifact_identity_limits():
    with criterion("A7", "zero severity == identity (1e-4); k-space ops match naive DFT (1e-5)"):
        rng = np.random.default_rng(44)
        v = random_volume(rng, (8, 8, 8))
        cases = [
            apply_chunk(v, 0)[0],
            apply_gaussian_kspace(v, 0.0, seed=1),
            apply_spike(v, 0.0),
            apply_bias_field(v, 0.0),
            apply_ghosting(v, 0.0),
            apply_zipper(v, 0, seed=1)[0],
            apply_sequence_swap(v),
        ]
        for out in cases:
            assert np.abs(out.data - v.data).max() < 1e-4
        # naive-DFT oracles on 4^3 inputs
        w = random_volume(rng, (4, 4, 4))
        coeffs = naive_dft(w.data.astype(np.float64))
        sigma, seed = 0.2, 7
        gen = np.random.default_rng(seed)
        noise = sigma * np.abs(coeffs.real).max() * gen.uniform(-1, 1, w.dims) + 1j * (
            sigma * np.abs(coeffs.imag).max() * gen.uniform(-1, 1, w.dims)
        )
        expected = np.fft.ifftn(coeffs + noise).real
        got = apply_gaussian_kspace(w, sigma, seed=seed)
        assert np.abs(got.data - expected).max() < 1e-5

        shifted = np.fft.fftshift(coeffs.copy())
        boost = 0.2 * np.abs(shifted).max()
        shifted[tuple(np.array([2, 2, 2]) + np.rint(0.4 * np.array([2.0, 2.0, 2.0])).astype(int))] += boost
        expected = np.fft.ifftn(np.fft.ifftshift(shifted)).real
        got = apply_spike(w, 0.2, locations=((0.4, 0.4, 0.4),))
        assert np.abs(got.data - expected).max() < 1e-5

        ghosted = coeffs.copy()
        ghosted[:, 0::4, :] *= 0.5
        expected = np.fft.ifftn(ghosted).real
        got = apply_ghosting(w, 0.5, period=4, axis=1)
        assert np.abs(got.data - expected).max() < 1e-5


def _detection_score(x, clean, brain, seed):
    guidance = high_frequency_image(x, 15.0)
    kind = PhantomOracle(clean)
    samples, _ = scan_thresholds(x, brain, kind, guidance, seed=seed)
    curve = select_tau_stop(samples, gamma=0.01)  # detection default
    mask, _, _ = refine(x, brain, kind, guidance, curve.tau_stop, seed=seed)
    return int(mask.sum())


def test_a8_detection_pipeline():
    with criterion("A8", "AUROC >= 0.95 for gaussian(0.2) and chunk(l=40, middle) phantoms"):
        start = time.monotonic()
        clean_scores = []
        phantoms = []
        for i in range(20):
            ph = make_phantom((64, 64, 64), None, seed=500 + i)
            phantoms.append(ph)
            clean_scores.append(_detection_score(ph.observed, ph.clean, ph.brain, seed=500 + i))
        for art in ("gaussian", "chunk"):
            labels = [0] * 20
            scores = list(clean_scores)
            for i, ph in enumerate(phantoms):
                if art == "gaussian":
                    bad = apply_gaussian_kspace(ph.observed, 0.2, seed=900 + i)
                else:
                    bad, _ = apply_chunk(ph.observed, 40, "middle")
                labels.append(1)
                scores.append(_detection_score(bad, ph.clean, ph.brain, seed=500 + i))
            result = roc_pr(labels, scores)
            assert result["auroc"] >= 0.95, f"{art}: AUROC {result['auroc']:.3f}"
        assert time.monotonic() - start < 600.0


def test_a9_metric_oracles(tmp_path):
    with criterion("A9", "AUROC == pairwise oracle; Jaccard-Dice 1e-12; ASSD == O(S^2) oracle; byte-stable reports"):
        rng = np.random.default_rng(55)
        for _ in range(100):
            n = int(rng.integers(4, 201))
            labels = rng.integers(0, 2, n)
            labels[0], labels[1] = 0, 1
            scores = np.round(rng.normal(size=n), 1)  # coarse grid forces ties
            got = roc_pr(labels, scores)["auroc"]
            assert got == pytest.approx(auroc_pairwise_oracle(labels, scores), abs=1e-12)
        for _ in range(30):
            a = rng.uniform(size=(5, 5, 5)) < 0.4
            b = rng.uniform(size=(5, 5, 5)) < 0.4
            out, _ = overlap_metrics(a, b)
            assert abs(out["jaccard"] - out["dsc"] / (2.0 - out["dsc"])) < 1e-12
        pairs = 0
        while pairs < 20:
            a = np.zeros((7, 7, 7), dtype=bool)
            b = np.zeros((7, 7, 7), dtype=bool)
            a[sphere_mask((7, 7, 7), tuple(rng.integers(2, 5, 3)), int(rng.integers(1, 3)))] = True
            b[sphere_mask((7, 7, 7), tuple(rng.integers(2, 5, 3)), int(rng.integers(1, 3)))] = True
            if not (a.any() and b.any()):
                continue
            assert assd(a, b) == pytest.approx(assd_pairwise_oracle(a, b), abs=1e-9)
            pairs += 1
        manifest = [{"label": int(l), "score": float(s)}
                    for l, s in zip([0, 0, 1, 1, 1], [0.1, 0.5, 0.4, 0.8, 0.9])]
        (tmp_path / "det.json").write_text(json.dumps(manifest))
        outs = []
        for name in ("r1.json", "r2.json"):
            cli_main(["eval-det", "--manifest", str(tmp_path / "det.json"),
                      "--out", str(tmp_path / name)])
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]


def test_a10_termination_and_reproducibility():
    with criterion("A10", "refine halts on adversarial reconstructors; traces byte-identical"):
        rng = np.random.default_rng(66)
        constant_output = PhantomOracle(Volume(np.zeros((16, 16, 16), dtype=np.float32)))
        for kind in (Identity(), MeanFill(), constant_output):
            for trial in range(10):
                data = rng.standard_normal((16, 16, 16)).astype(np.float32)
                brain = sphere_mask((16, 16, 16), (8, 8, 8), 6)
                data[~brain] = 0.0
                x = Volume(data)
                guidance = Volume(np.zeros(x.dims, dtype=np.float32))
                mask, trace, _ = refine(x, brain, kind, guidance, tau_stop=0.5,
                                        seed=trial, max_iters=40)
                assert len(trace.iterations) <= 40
                assert trace.terminated_reason in ("converged", "max_iters", "mask_empty")
        ph = make_phantom((32, 32, 32), None, seed=9)
        guidance = high_frequency_image(ph.observed, 8.0)
        traces = []
        for _ in range(2):
            _, trace, _ = refine(ph.observed, ph.brain, Identity(), guidance,
                                 tau_stop=1.0, seed=123, max_iters=30)
            traces.append(trace.to_json().encode())
        assert traces[0] == traces[1]
