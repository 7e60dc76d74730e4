"""Command-line entry point.

Subcommands mirror the pipeline stages: synth makes a toy dataset, train
fits the network, infer writes segmentation masks, eval scores them, and
ablate sweeps every inference mode and tabulates the comparison. Exit codes:
0 success, 2 bad usage or configuration, 3 bad data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import parse_config
from .data import load_sod_dataset, load_vos_dataset, save_mask_png
from .errors import ConfigError, DataLayoutError, NumericError
from .metrics import evaluate_dataset
from .selection import MODES, TTA_SCALES, infer_sequence
from .synthetic import (SynthConfig, generate_synthetic_dataset,
                        write_sod_dataset, write_vos_dataset)
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="movos",
        description="Video object segmentation with motion as an optional input.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sequences", type=int, default=4, help="number of video sequences")
    p.add_argument("--frames", type=int, default=8, help="frames per sequence")
    p.add_argument("--resolution", type=int, default=64, help="square frame size")
    p.add_argument("--sod-frames", type=int, default=0, help="independent still frames")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment a dataset with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset root (JPEGImages/ layout)")
    p.add_argument("--mode", choices=MODES, default="select")
    p.add_argument("--out", required=True, help="output directory for masks")
    p.add_argument("--tta", action="store_true", help="multi-scale and mirror averaging")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against annotations")
    p.add_argument("--pred", required=True, help="prediction root")
    p.add_argument("--gt", required=True, help="dataset root or annotation root")
    p.add_argument("--out", required=True, help="report JSON path (CSV written alongside)")
    p.add_argument("--jobs", type=int, default=1, help="parallel scoring threads")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run every inference mode and tabulate scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="annotated dataset root")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tta", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def cmd_synth(args) -> None:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"{out} exists and is not empty; pass --force to overwrite")
    if args.resolution % 32:
        raise ConfigError(
            f"resolution {args.resolution} is not divisible by 32, the network's "
            f"overall downsampling factor; choose a multiple of 32")
    cfg = SynthConfig(n_sequences=args.sequences, frames_per_seq=args.frames,
                      resolution=args.resolution, n_sod=args.sod_frames)
    rng = np.random.default_rng(args.seed)
    sequences, stills = generate_synthetic_dataset(cfg, rng)
    write_vos_dataset(sequences, out / "vos")
    if stills:
        write_sod_dataset(stills, out / "sod")
    manifest = {
        "seed": args.seed,
        "resolution": args.resolution,
        "vos_root": str(out / "vos"),
        "sequences": len(sequences),
        "frames": sum(len(s) for s in sequences),
        "sod_root": str(out / "sod") if stills else None,
        "sod_frames": len(stills),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest, indent=2))


def cmd_train(args) -> None:
    run = parse_config(args.config)
    for key in ("vos_root", "sod_root", "out_dir"):
        if getattr(run, key) is None:
            raise ConfigError(f"{args.config}: required key '{key}' is not set")
    vos = load_vos_dataset(run.vos_root, flow_max_mag=run.flow_max_mag)
    sod = load_sod_dataset(run.sod_root)
    cfg = TrainConfig(steps=run.steps, resolution=run.resolution,
                      batch_size=run.batch_size, learning_rate=run.learning_rate,
                      p_sod=run.p_sod, seed=run.seed, freeze_norm=run.freeze_norm,
                      channels=run.channels, threads=run.threads)
    out_dir = Path(run.out_dir)
    if run.sod_pretrain_steps > 0:
        warm = dataclasses.replace(cfg, steps=run.sod_pretrain_steps, p_sod=1.0)
        warm_ckpt = train(warm, vos, sod, out_dir / "sod_pretrain")
        final = train(cfg, vos, sod, out_dir, init_checkpoint=warm_ckpt)
    else:
        final = train(cfg, vos, sod, out_dir)
    print(f"final checkpoint: {final}")


def _run_inference(model, meta: dict, dataset, mode: str, out_dir: Path,
                   tta: bool) -> dict:
    resolution = int(meta.get("resolution", 64))
    n_image = 0
    n_flow = 0
    per_sequence = {}
    for seq in dataset:
        masks, log = infer_sequence(model, seq, mode, resolution,
                                    tta=tta, tta_scales=TTA_SCALES)
        for sample, mask in zip(seq.samples, masks):
            stem = sample.name.split("/")[-1]
            save_mask_png(mask, out_dir / seq.name / f"{stem}.png")
        log.write_csv(out_dir / seq.name / "selection_log.csv")
        diffs = log.alpha_diffs()
        if diffs:
            with open(out_dir / seq.name / "alpha_diff.csv", "w", newline="") as f:
                f.write("frame,alpha_image_minus_alpha_flow\n")
                for frame, diff in diffs:
                    f.write(f"{frame},{diff:.9f}\n")
        seq_entry = {"frames": len(seq.samples)}
        ratios = log.ratios()
        if ratios is not None:
            seq_entry.update(ratios)
            n_image += sum(1 for r in log.rows if r.chosen == "image")
            n_flow += sum(1 for r in log.rows if r.chosen == "flow")
        per_sequence[seq.name] = seq_entry
    summary = {"mode": mode, "tta": tta, "sequences": per_sequence}
    decided = n_image + n_flow
    if decided:
        summary["selection_ratios"] = {
            "image_pct": 100.0 * n_image / decided,
            "flow_pct": 100.0 * n_flow / decided,
        }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_infer(args) -> None:
    model, meta = load_checkpoint(args.checkpoint)
    dataset = load_vos_dataset(args.data, require_flow=(args.mode != "image_only"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = _run_inference(model, meta, dataset, args.mode, out_dir, args.tta)
    line = f"wrote masks for {len(dataset)} sequences to {out_dir}"
    if "selection_ratios" in summary:
        r = summary["selection_ratios"]
        line += f" (image {r['image_pct']:.1f}%, flow {r['flow_pct']:.1f}%)"
    print(line)


def _gt_root(path: str | Path) -> Path:
    root = Path(path)
    ann = root / "Annotations"
    return ann if ann.is_dir() else root


def cmd_eval(args) -> None:
    report = evaluate_dataset(args.pred, _gt_root(args.gt), jobs=args.jobs)
    out = Path(args.out)
    report.write_json(out)
    report.write_csv(out.with_suffix(".csv"))
    d = report.dataset_means()
    print(f"J {d['J']:.4f}  F {d['F']:.4f}  G {d['G']:.4f}  "
          f"({d['sequences']} sequences, {d['frames']} frames)")


def cmd_ablate(args) -> None:
    model, meta = load_checkpoint(args.checkpoint)
    dataset = load_vos_dataset(args.data)
    gt = _gt_root(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for mode in MODES:
        mode_dir = out_dir / mode
        summary = _run_inference(model, meta, dataset, mode, mode_dir, args.tta)
        report = evaluate_dataset(mode_dir, gt, jobs=args.jobs)
        d = report.dataset_means()
        ratios = summary.get("selection_ratios", {})
        rows.append({
            "mode": mode,
            "J": d["J"], "F": d["F"], "G": d["G"],
            "image_pct": ratios.get("image_pct"),
            "flow_pct": ratios.get("flow_pct"),
        })

    with open(out_dir / "ablation.csv", "w", newline="") as f:
        f.write("mode,J,F,G,image_pct,flow_pct\n")
        for r in rows:
            ip = "" if r["image_pct"] is None else f"{r['image_pct']:.2f}"
            fp = "" if r["flow_pct"] is None else f"{r['flow_pct']:.2f}"
            f.write(f"{r['mode']},{r['J']:.6f},{r['F']:.6f},{r['G']:.6f},{ip},{fp}\n")

    header = f"{'mode':<12}{'J':>8}{'F':>8}{'G':>8}{'img%':>8}{'flow%':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        ip = "   -" if r["image_pct"] is None else f"{r['image_pct']:7.1f}%"
        fp = "   -" if r["flow_pct"] is None else f"{r['flow_pct']:7.1f}%"
        lines.append(f"{r['mode']:<12}{r['J']:>8.4f}{r['F']:>8.4f}{r['G']:>8.4f}{ip:>8}{fp:>8}")
    table = "\n".join(lines)
    (out_dir / "ablation.txt").write_text(table + "\n")
    print(table)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataLayoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
