"""Command-line entry point: ``puseg synth | pipeline | eval``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ksptrack, metrics, seqdata, ssnnpu, synth
from .priorfilter import NoiseConfig, append_prior_log
from .ssnnpu import PipelineConfig, run_full_pipeline, write_manifest
from .synth import SynthConfig
from .trainer import TrainConfig


def _add_synth_parser(sub) -> None:
    p = sub.add_parser("synth", help="generate a synthetic sequence directory")
    p.add_argument("--shape", choices=["disc", "ring"], default="disc")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--size", type=int, default=64, help="square frame side length")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--radius-base", type=float, default=7.0)
    p.add_argument("--radius-amp", type=float, default=1.8)
    p.add_argument("--motion", choices=["circular", "linear"], default="circular")
    p.add_argument("--motion-extent", type=float, default=6.0)
    p.add_argument("--noise-std", type=float, default=0.10)
    p.add_argument("--out", required=True, help="output sequence directory")


def _add_pipeline_parser(sub) -> None:
    p = sub.add_parser("pipeline", help="run the segmentation pipeline on a sequence")
    p.add_argument("--input", required=True, help="sequence directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=[ssnnpu.MODE_SSNNPU, ssnnpu.MODE_NNPU_TRUE,
                                      ssnnpu.MODE_NNPU_CONST],
                   default=ssnnpu.MODE_SSNNPU)
    p.add_argument("--eta", default="1.4",
                   help="upper-bound multiplier; comma-separated values run a sweep")
    p.add_argument("--pi0", type=float, default=None,
                   help="explicit prior upper bound (required without ground truth)")
    p.add_argument("--no-tracker", action="store_true",
                   help="skip the path tracker; masks are thresholded probabilities")
    p.add_argument("--tau", type=float, default=0.007)
    p.add_argument("--ts", type=int, default=10)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--sigma-q", type=float, default=10.0)
    p.add_argument("--sigma-r", type=float, default=0.05)
    p.add_argument("--sigma-s", type=float, default=0.03)
    p.add_argument("--u0-frac", type=float, default=0.02)
    p.add_argument("--ut-frac", type=float, default=0.4)
    p.add_argument("--prune", type=float, default=0.4)
    p.add_argument("--superpixels", type=int, default=256)
    p.add_argument("--radius-frac", type=float, default=0.05)
    p.add_argument("--phase1-epochs", type=int, default=50)
    p.add_argument("--phase2-max-epochs", type=int, default=100)
    p.add_argument("--phase3-epochs", type=int, default=100)
    p.add_argument("--threads", type=int, default=1,
                   help="cap on worker pools (graph construction only)")


def _add_eval_parser(sub) -> None:
    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--gt", required=True,
                   help="directory of ground-truth masks (or a sequence root)")
    p.add_argument("--out", default=None, help="metrics CSV path (default: stdout)")


def _pipeline_config(args, eta: float) -> PipelineConfig:
    train = TrainConfig(
        epochs_phase1=args.phase1_epochs,
        max_epochs_phase2=args.phase2_max_epochs,
        epochs_phase3=args.phase3_epochs,
    )
    return PipelineConfig(
        mode=args.mode,
        seed=args.seed,
        eta=eta,
        pi0=args.pi0,
        gamma=args.gamma,
        radius_frac=args.radius_frac,
        u0_frac=args.u0_frac,
        ut_frac=args.ut_frac,
        tau=args.tau,
        ts=args.ts,
        prune=args.prune,
        superpixel_count=args.superpixels,
        train=train,
        noise=NoiseConfig(args.sigma_q, args.sigma_r, args.sigma_s),
    )


def _manifest_entries(cfg: PipelineConfig, args) -> dict:
    entries = {
        "mode": cfg.mode, "seed": cfg.seed, "eta": cfg.eta, "pi0": cfg.pi0,
        "pi_init": cfg.pi_init, "gamma": cfg.gamma, "radius_frac": cfg.radius_frac,
        "window_frac": cfg.window_frac, "u0_frac": cfg.u0_frac, "ut_frac": cfg.ut_frac,
        "tau": cfg.tau, "ts": cfg.ts, "prune": cfg.prune,
        "superpixels": cfg.superpixel_count, "sigma_q": cfg.noise.sigma_q,
        "sigma_r": cfg.noise.sigma_r, "sigma_s": cfg.noise.sigma_s,
        "phase1_epochs": cfg.train.epochs_phase1,
        "phase2_max_epochs": cfg.train.max_epochs_phase2,
        "phase3_epochs": cfg.train.epochs_phase3,
        "lr_phase1": cfg.train.lr_phase1, "lr_phase23": cfg.train.lr_phase23,
        "weight_decay": cfg.train.weight_decay,
        "tracker": not args.no_tracker, "input": args.input,
    }
    return entries


def run_pipeline_once(seq, cfg: PipelineConfig, out: Path, tracker: bool) -> dict:
    """Execute one configuration and write every artifact below ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    result = run_full_pipeline(seq, cfg)

    seqdata.save_prob_maps(result.prob_maps, out / "probmaps")
    scorer_masks = [pm >= 0.5 for pm in result.prob_maps]
    seqdata.save_masks(seq, scorer_masks, out / "scorer_masks")

    if tracker:
        superpixels = ksptrack.make_superpixels(seq, cfg.superpixel_count)
        annotations = [a for f in seq.frames for a in f.annotations]
        graph = ksptrack.build_graph(superpixels, result.prob_maps, annotations,
                                     cfg.radius_frac, cfg.prune)
        solution = ksptrack.solve_ksp(graph)
        final_masks = ksptrack.solution_to_masks(
            solution, superpixels, seq.width, seq.height, seq.n_frames
        )
    else:
        superpixels = None
        final_masks = scorer_masks
    seqdata.save_masks(seq, final_masks, out / "masks")

    for rec in result.records:
        append_prior_log(out / "priors.csv", rec.epoch, rec.rho, rec.pi_hat,
                         rec.pos_fractions)
    with open(out / "final_priors.csv", "w") as fh:
        fh.write("frame,pi_hat\n")
        for i, value in enumerate(result.priors):
            fh.write(f"{i},{value:.17g}\n")
    with open(out / "epochs.csv", "w") as fh:
        fh.write("epoch,mean_pos_risk,mean_neg_risk,ascent_fraction\n")
        stats = result.phase_stats + [r.train for r in result.records]
        for st in sorted(stats, key=lambda s: s.epoch):
            fh.write(f"{st.epoch},{st.mean_pos_risk:.17g},{st.mean_neg_risk:.17g},"
                     f"{st.ascent_fraction:.17g}\n")

    row = {
        "sequence": Path(out).name, "method": cfg.mode + ("+ksp" if tracker else ""),
        "eta": cfg.eta, "f1": "", "precision": "", "recall": "",
        "prior_mae": "", "stopping_epoch": result.stopping_epoch,
    }
    if seq.has_gt():
        gt = [f.gt_mask for f in seq.frames]
        seg = metrics.seg_metrics(final_masks, gt)
        truth = synth.true_priors(seq)
        row.update(f1=seg.f1, precision=seg.precision, recall=seg.recall,
                   prior_mae=metrics.prior_mae(result.priors, truth))
    metrics.write_metrics_csv(out / "metrics.csv", [row])
    return row


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        shape=args.shape, n_frames=args.frames, width=args.size, height=args.size,
        radius_base=args.radius_base, radius_amp=args.radius_amp,
        motion=args.motion, motion_extent=args.motion_extent,
        noise_std=args.noise_std, seed=args.seed,
    )
    seq = synth.generate(cfg)
    seqdata.save_sequence(seq, args.out)
    print(f"wrote {seq.n_frames} frames ({seq.width}x{seq.height}) to {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    seq = seqdata.load_sequence(args.input)
    try:
        etas = [float(e) for e in str(args.eta).split(",") if e.strip()]
    except ValueError:
        print(f"invalid --eta value: {args.eta}", file=sys.stderr)
        return 2
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for eta in etas:
        cfg = _pipeline_config(args, eta)
        run_dir = out_root if len(etas) == 1 else out_root / f"eta_{eta:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(run_dir / "manifest.txt", _manifest_entries(cfg, args))
        row = run_pipeline_once(seq, cfg, run_dir, tracker=not args.no_tracker)
        rows.append(row)
        print(f"eta={eta:g} mode={cfg.mode} f1={row['f1'] or 'n/a'}")
    if len(etas) > 1:
        metrics.write_metrics_csv(out_root / "metrics.csv", rows)
    return 0


def cmd_eval(args) -> int:
    pred = seqdata.load_masks(args.pred)
    gt_dir = Path(args.gt)
    if (gt_dir / seqdata.MASKS_DIR).is_dir():
        gt_dir = gt_dir / seqdata.MASKS_DIR
    gt = seqdata.load_masks(gt_dir)
    if len(pred) != len(gt):
        print(f"frame count mismatch: {len(pred)} predictions, {len(gt)} ground truth",
              file=sys.stderr)
        return 1
    seg = metrics.seg_metrics(pred, gt)
    row = {"sequence": Path(args.pred).name, "method": "eval", "eta": "",
           "f1": seg.f1, "precision": seg.precision, "recall": seg.recall,
           "prior_mae": "", "stopping_epoch": ""}
    if args.out:
        metrics.write_metrics_csv(args.out, [row])
    print(f"f1={seg.f1:.6f} precision={seg.precision:.6f} recall={seg.recall:.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="puseg")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth_parser(sub)
    _add_pipeline_parser(sub)
    _add_eval_parser(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "pipeline":
            return cmd_pipeline(args)
        return cmd_eval(args)
    except (seqdata.SequenceLoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
