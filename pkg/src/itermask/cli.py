"""Command-line interface.

Subcommands: normalize, hp-filter, genmask, corrupt, phantom, threshold-scan,
refine, eval-det, eval-seg, run. `run` reads an optional TOML/JSON config
file mirroring PipelineConfig; explicit flags override the file. The env var
ITERMASK_SEED supplies the default seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .artifacts import (
    apply_bias_field,
    apply_chunk,
    apply_gaussian_kspace,
    apply_ghosting,
    apply_sequence_swap,
    apply_spike,
    apply_zipper,
)
from .maskgen import realize_mask, sample_mask_spec
from .phantom import LesionSpec, make_phantom
from .pipeline import PipelineConfig, StageError, make_reconstructor, run_pipeline
from .refine import refine
from .spectral import high_frequency_image
from .threshold import scan_thresholds, select_tau_stop
from .volume import (
    derive_brain_mask,
    load_mask,
    load_volume,
    normalize_iterative_zscore,
    save_mask,
    save_volume,
)


def _default_seed() -> int:
    return int(os.environ.get("ITERMASK_SEED", "0"))


def _load_config_file(path):
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        return json.loads(text)
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    return tomllib.loads(text.decode())


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $ITERMASK_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itermask")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="iterative z-score normalization over the brain region")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--brain", help="brain mask .vol (default: |x| > 0)")
    p.add_argument("--allow-anisotropic", action="store_true")
    p.add_argument("--report", help="write per-pass statistics JSON here")

    p = sub.add_parser("hp-filter", help="high-pass structural guidance image")
    p.add_argument("--radius", type=float, default=15.0)
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("genmask", help="sample one random training mask")
    p.add_argument("--brain", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("corrupt", help="apply a synthetic artifact")
    p.add_argument("--artifact", required=True,
                   choices=["chunk", "gaussian", "spike", "bias", "ghosting", "zipper", "sequence-swap"])
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--gt", help="write ground-truth anomaly mask here (chunk/zipper)")
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--width", type=int, default=40)
    p.add_argument("--position", choices=["top", "middle"], default="top")
    p.add_argument("--strips", type=int, default=3)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--period", type=int, default=4)
    p.add_argument("--axis", type=int, default=None)
    p.add_argument("--coef", type=float, default=0.1)
    p.add_argument("--spike-k", type=float, nargs=3, default=(0.4, 0.4, 0.4),
                   metavar=("KX", "KY", "KZ"))
    p.add_argument("--replacement", help="volume substituted by sequence-swap")
    _add_seed(p)

    p = sub.add_parser("phantom", help="generate a synthetic subject")
    p.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--lesion", type=float, nargs=5, metavar=("CX", "CY", "CZ", "R", "OFFSET"))
    _add_seed(p)

    p = sub.add_parser("threshold-scan", help="fixed-rate scan + stopping threshold")
    p.add_argument("--input", required=True)
    p.add_argument("--brain")
    p.add_argument("--guidance", default="auto")
    p.add_argument("--reconstructor", default="harmonic")
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--radius", type=float, default=15.0)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("refine", help="iterative mask refinement")
    p.add_argument("--input", required=True)
    p.add_argument("--brain")
    p.add_argument("--guidance", default="auto")
    p.add_argument("--reconstructor", default="harmonic")
    p.add_argument("--tau-stop", default="auto")
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--radius", type=float, default=15.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--trace")
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("eval-det", help="detection metrics from a score manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-seg", help="segmentation metrics for one subject")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--img")
    p.add_argument("--recon")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--input", action="append", default=None)
    p.add_argument("--out-dir")
    p.add_argument("--brain")
    p.add_argument("--truth")
    p.add_argument("--reconstructor")
    p.add_argument("--mode", choices=["detection", "segmentation"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--tau-stop", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--allow-anisotropic", action="store_true", default=None)
    p.add_argument("--skip-normalize", action="store_true", default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_seed(p)
    return parser


def _seed_of(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _brain_of(args, volume):
    return load_mask(args.brain) if getattr(args, "brain", None) else derive_brain_mask(volume)


def _guidance_of(args, volume):
    if args.guidance == "auto":
        return high_frequency_image(volume, args.radius)
    return load_volume(args.guidance)


def cmd_normalize(args) -> int:
    v = load_volume(args.input)
    if not args.allow_anisotropic:
        from .volume import require_isotropic

        require_isotropic(v)
    brain = _brain_of(args, v)
    out, report = normalize_iterative_zscore(v, brain)
    save_volume(out, args.output)
    if args.report:
        Path(args.report).write_text(
            json.dumps(
                {
                    "mean_history": list(report.mean_history),
                    "std_history": list(report.std_history),
                    "passes": report.passes,
                },
                indent=2, sort_keys=True,
            )
            + "\n"
        )
    return 0


def cmd_hp_filter(args) -> int:
    v = load_volume(args.input)
    save_volume(high_frequency_image(v, args.radius), args.output)
    return 0


def cmd_genmask(args) -> int:
    brain = load_mask(args.brain)
    spec = sample_mask_spec(brain, seed=_seed_of(args))
    save_mask(realize_mask(spec, brain), args.out)
    return 0


def cmd_corrupt(args) -> int:
    v = load_volume(args.input)
    seed = _seed_of(args)
    gt = None
    art = args.artifact
    if art == "chunk":
        out, gt = apply_chunk(v, args.width, args.position, axis=2 if args.axis is None else args.axis)
    elif art == "gaussian":
        out = apply_gaussian_kspace(v, args.sigma, seed=seed)
    elif art == "spike":
        out = apply_spike(v, args.sigma, locations=(tuple(args.spike_k),))
    elif art == "bias":
        out = apply_bias_field(v, args.coef)
    elif art == "ghosting":
        out = apply_ghosting(v, args.alpha, args.period, axis=1 if args.axis is None else args.axis)
    elif art == "zipper":
        out, gt = apply_zipper(v, args.strips, args.height,
                               axis=1 if args.axis is None else args.axis, seed=seed)
    else:
        replacement = load_volume(args.replacement) if args.replacement else None
        out = apply_sequence_swap(v, replacement)
    save_volume(out, args.output)
    if args.gt:
        if gt is None:
            print(f"{art} has no localized ground truth; skipping --gt", file=sys.stderr)
        else:
            save_mask(gt, args.gt, v.spacing)
    return 0


def cmd_phantom(args) -> int:
    lesion = None
    if args.lesion:
        cx, cy, cz, r, offset = args.lesion
        lesion = LesionSpec((cx, cy, cz), r, offset)
    ph = make_phantom(tuple(args.dims), lesion, seed=_seed_of(args))
    out = Path(args.out_dir)
    save_volume(ph.clean, out / "clean.vol")
    save_volume(ph.observed, out / "observed.vol")
    save_mask(ph.brain, out / "brain.vol")
    save_mask(ph.truth, out / "truth.vol")
    return 0


def cmd_threshold_scan(args) -> int:
    v = load_volume(args.input)
    brain = _brain_of(args, v)
    guidance = _guidance_of(args, v)
    kind = make_reconstructor(args.reconstructor)
    samples, _ = scan_thresholds(v, brain, kind, guidance, seed=_seed_of(args))
    curve = select_tau_stop(samples, args.gamma)
    Path(args.out).write_text(curve.to_json())
    return 0


def cmd_refine(args) -> int:
    v = load_volume(args.input)
    brain = _brain_of(args, v)
    guidance = _guidance_of(args, v)
    kind = make_reconstructor(args.reconstructor)
    seed = _seed_of(args)
    if args.tau_stop == "auto":
        samples, _ = scan_thresholds(v, brain, kind, guidance, seed=seed)
        tau = select_tau_stop(samples, args.gamma).tau_stop
    else:
        tau = float(args.tau_stop)
    mask, trace, _ = refine(v, brain, kind, guidance, tau, seed=seed, max_iters=args.max_iters)
    save_mask(mask, args.out, v.spacing)
    if args.trace:
        Path(args.trace).write_text(trace.to_json())
    return 0


def cmd_eval_det(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    labels = [int(m["label"]) for m in manifest]
    scores = [float(m["score"]) for m in manifest]
    report = metrics.roc_pr(labels, scores)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_eval_seg(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth)
    overlap, flags = metrics.overlap_metrics(pred, truth)
    report = dict(overlap)
    report["flags"] = flags
    if pred.any() and truth.any():
        report["assd_mm"] = metrics.assd(pred, truth)
    else:
        report["assd_mm"] = None
        report["flags"].append("assd undefined for empty mask")
    if args.img and args.recon:
        x = load_volume(args.img)
        recon = load_volume(args.recon)
        region = derive_brain_mask(x) & ~truth
        psnr, psnr_flags = metrics.psnr_region(x, recon, region)
        report["psnr_db"] = None if math.isinf(psnr) else psnr
        report["flags"].extend(psnr_flags)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_run(args) -> int:
    base = {}
    if args.config:
        base = _load_config_file(args.config)
    inputs = args.input if args.input else ([base["input"]] if "input" in base else [])
    if not inputs:
        print("run: no --input given and none in config", file=sys.stderr)
        return 2
    overrides = {
        k: v
        for k, v in {
            "out_dir": args.out_dir,
            "brain": args.brain,
            "truth": args.truth,
            "reconstructor": args.reconstructor,
            "mode": args.mode,
            "gamma": args.gamma,
            "radius": args.radius,
            "tau_stop": args.tau_stop,
            "max_iters": args.max_iters,
            "allow_anisotropic": args.allow_anisotropic,
            "skip_normalize": args.skip_normalize,
            "seed": args.seed,
        }.items()
        if v is not None
    }
    merged = {**{k: v for k, v in base.items() if k != "input"}, **overrides}
    merged.setdefault("seed", _default_seed())
    if "out_dir" not in merged:
        print("run: --out-dir required", file=sys.stderr)
        return 2

    def one(path, out_dir):
        cfg = PipelineConfig(input=str(path), **{**merged, "out_dir": str(out_dir)})
        return run_pipeline(cfg)

    jobs = []
    for i, path in enumerate(inputs):
        out_dir = merged["out_dir"] if len(inputs) == 1 else str(Path(merged["out_dir"]) / f"subject-{i:03d}")
        jobs.append((path, out_dir))
    try:
        if args.jobs > 1 and len(jobs) > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                list(pool.map(_run_one_star, [(p, o, merged) for p, o in jobs]))
        else:
            for path, out_dir in jobs:
                one(path, out_dir)
    except StageError as exc:
        print(f"itermask run failed: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _run_one_star(item):
    path, out_dir, merged = item
    cfg = PipelineConfig(input=str(path), **{**merged, "out_dir": str(out_dir)})
    return run_pipeline(cfg)


COMMANDS = {
    "normalize": cmd_normalize,
    "hp-filter": cmd_hp_filter,
    "genmask": cmd_genmask,
    "corrupt": cmd_corrupt,
    "phantom": cmd_phantom,
    "threshold-scan": cmd_threshold_scan,
    "refine": cmd_refine,
    "eval-det": cmd_eval_det,
    "eval-seg": cmd_eval_seg,
    "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"itermask: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"itermask: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
