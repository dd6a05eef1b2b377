"""Command-line entry point: simulate, track, evaluate, gradcheck, purity-curve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .config import ConfigError, PipelineConfig, load_config
from .core import SequenceError, validate_sequence
from .embedder import LOSS_KINDS, EmbeddingModel, LossConfig, grad_check, random_active_sample, write_checkpoint, write_loss_trace
from .linker import cluster_to_k
from .metrics import mot_report, weighted_purity
from .pipeline import STAGES, StageError, purity_curve, run
from .synth import generate

log = logging.getLogger("symtrack")

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE, EXIT_CHECK = 0, 1, 2, 3

DETECTIONS = "detections.txt"
SHOTS = "shots.txt"
GROUNDTRUTH = "groundtruth.txt"


def _overrides(args) -> dict:
    out: dict = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "loss", None):
        out["loss"] = {"kind": args.loss}
    if getattr(args, "epochs", None) is not None:
        out["train"] = {"epochs": args.epochs}
    if getattr(args, "theta", None) is not None:
        out["linker"] = {"theta": args.theta}
    return out


def _config(args) -> PipelineConfig:
    return load_config(args.config, _overrides(args))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    detections, shots, gt = generate(cfg.scenario)
    fio.write_detections(detections, out / DETECTIONS)
    fio.write_shots(shots, out / SHOTS)
    fio.write_groundtruth(gt, out / GROUNDTRUTH)
    print(f"wrote {len(detections)} detections in {len(shots)} shots to {out}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args)
    src, out = Path(args.input), Path(args.out)
    try:
        detections = fio.read_detections(src / DETECTIONS)
        shots = fio.read_shots(src / SHOTS)
    except (OSError, fio.FormatError) as e:
        print(f"stage 0 (load_inputs) failed: {e}", file=sys.stderr)
        return EXIT_STAGE
    try:
        seq = validate_sequence(detections, shots)
    except SequenceError as e:
        print(f"stage 0 (load_inputs) invalid sequence: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        result = run(
            seq,
            affinity=cfg.affinity,
            context=cfg.context,
            mining=cfg.mining,
            model_cfg=cfg.model,
            loss=cfg.loss,
            train_cfg=cfg.train,
            linker=cfg.linker,
            seed=cfg.seed,
            threads=cfg.threads,
        )
    except StageError as e:
        print(f"stage {STAGES.index(e.stage) + 1} ({e.stage}) failed: {e.cause}", file=sys.stderr)
        return EXIT_STAGE

    out.mkdir(parents=True, exist_ok=True)
    fio.write_tracklets(result.tracklets, out / "tracklets.txt")
    fio.write_tracklets(result.shot_tracklets, out / "shot_tracklets.txt")
    fio.write_trajectories(result.trajectories, out / "trajectories.txt")
    fio.write_assignments(result.assignments(), out / "assignments.txt")
    fio.write_embeddings(result.embeddings, out / "embeddings.txt")
    fio.write_constraints(result.constraints, out / "constraints.txt")
    write_loss_trace(result.loss_trace, out / "loss_trace.csv")
    write_checkpoint(result.model, out / "model.txt")
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "loss": cfg.loss.kind,
        "input": str(src),
        "stages": result.stages_completed,
        "counts": {
            "detections": len(seq),
            "tracklets": len(result.tracklets),
            "shot_tracklets": len(result.shot_tracklets),
            "trajectories": len(result.trajectories),
            "positive_pairs": len(result.constraints.positives),
            "negative_pairs": len(result.constraints.negatives),
            "triplets": len(result.constraints.triplets),
            "tracklet_pos": len(result.constraints.tracklet_pos),
            "tracklet_neg": len(result.constraints.tracklet_neg),
        },
        "constraint_report": dict(sorted(result.constraints.report.items())),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{len(result.trajectories)} trajectories from {len(result.tracklets)} tracklets -> {out}")
    return EXIT_OK


def _frame_boxes(rows):
    out: dict[int, list] = {}
    for frame, ident, bbox in rows:
        out.setdefault(frame, []).append((ident, bbox))
    return out


def cmd_evaluate(args) -> int:
    src, results = Path(args.input), Path(args.results)
    out = Path(args.out) if args.out else results
    gt_path = Path(args.groundtruth) if args.groundtruth else src / GROUNDTRUTH
    try:
        detections = fio.read_detections(src / DETECTIONS)
        shots = fio.read_shots(src / SHOTS)
        seq = validate_sequence(detections, shots)
        gt = fio.read_groundtruth(gt_path)
        tracklets = fio.read_tracklets(results / "tracklets.txt", seq)
        embeddings = fio.read_embeddings(results / "embeddings.txt")
        assign = fio.read_assignments(results / "assignments.txt")
    except (OSError, fio.FormatError, SequenceError) as e:
        print(f"cannot load inputs: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    unknown = sorted(set(assign) - set(gt.labels)) + sorted(set(seq.by_id) - set(gt.labels))
    if unknown:
        print(f"detection ids missing from ground truth: {unknown[:10]}", file=sys.stderr)
        return EXIT_VALIDATION

    hyp = _frame_boxes((seq.by_id[d].frame, ident, seq.by_id[d].bbox) for d, ident in assign.items())
    report = mot_report(hyp, gt.boxes, args.iou)
    labels = {d: gt.labels[d] for d in seq.by_id}
    k_ideal = len(gt.identities)
    rows = purity_curve(tracklets, embeddings, labels)
    ideal = None
    if tracklets and k_ideal:
        k = min(k_ideal, len(tracklets))
        clustering = cluster_to_k(tracklets, embeddings, k)
        clusters = [[d for i in c for d in tracklets[i].detections] for c in clustering.clusters]
        ideal = weighted_purity(clusters, labels)

    out.mkdir(parents=True, exist_ok=True)
    fio.write_purity_curve(rows, out / "purity_curve.csv")
    (out / "report.csv").write_text(report.as_csv())
    table = report.as_table() + f"\npurity@k={k_ideal}  " + ("n/a" if ideal is None else f"{ideal:.4f}")
    (out / "report.txt").write_text(table + "\n")
    print(table)
    if args.min_purity is not None and (ideal is None or ideal < args.min_purity):
        print(f"purity below required {args.min_purity}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def run_gradcheck(seed: int, samples: int, tolerance: float, epsilon: float = 1e-5) -> dict[str, float]:
    """Worst relative gradient error per loss over seeded models with 1-3 hidden layers."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for kind in LOSS_KINDS:
        cfg = LossConfig(kind=kind)
        errs = []
        for i in range(samples):
            depth = 1 + i % 3
            sizes = [6] + [int(rng.integers(4, 9)) for _ in range(depth)] + [4]
            model = EmbeddingModel.init(sizes, seed=int(rng.integers(2**31)))
            positive = kind != "contrastive" or i % 2 == 0
            while True:
                inputs = random_active_sample(model, cfg, rng, epsilon, positive=positive)
                rep = grad_check(model, inputs, cfg, epsilon, tolerance, positive=positive)
                if not rep.rejected:
                    break
            errs.append(rep.max_rel_error)
        worst[kind] = max(errs)
    return worst


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    worst = run_gradcheck(cfg.seed, args.samples, args.tolerance)
    ok = True
    for kind, err in worst.items():
        status = "pass" if err <= args.tolerance else "FAIL"
        ok &= err <= args.tolerance
        print(f"{kind:<12} max_rel_error={err:.3e}  tolerance={args.tolerance:.1e}  {status}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_purity_curve(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = fio.read_purity_curve(args.curve)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([k for k, _ in rows], [p for _, p in rows], marker="o", ms=3)
    ax.set_xlabel("number of clusters")
    ax.set_ylabel("weighted purity")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symtrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)

    sp = sub.add_parser("simulate", help="write a synthetic scene")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("track", help="run the tracking pipeline")
    common(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--loss", choices=LOSS_KINDS)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--theta", type=float)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="score a tracking run against ground truth")
    sp.add_argument("--in", dest="input", required=True, help="directory with detections and shots")
    sp.add_argument("--results", required=True, help="output directory of `track`")
    sp.add_argument("--groundtruth")
    sp.add_argument("--out")
    sp.add_argument("--iou", type=float, default=0.5)
    sp.add_argument("--min-purity", type=float)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gradcheck", help="finite-difference check of all losses")
    common(sp)
    sp.add_argument("--samples", type=int, default=10)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("purity-curve", help="plot a purity curve CSV")
    sp.add_argument("--curve", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_purity_curve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
