"""Segmentation quality metrics and the dataset-level evaluation harness.

Region similarity J is plain intersection over union. Boundary accuracy F
matches the boundary pixels of prediction and ground truth within a small
tolerance radius and reports the F-measure of that matching. G averages the
two. Aggregation is mean over frames within a sequence, then mean over
sequences, so short and long sequences weigh equally.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import DataLayoutError

BOUNDARY_TOL_FRACTION = 0.008


def _check_mask_pair(gt: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"mask shapes differ: {gt.shape} vs {pred.shape}")
    if gt.ndim != 2:
        raise ValueError(f"masks must be 2-d, got shape {gt.shape}")
    for name, m in (("gt", gt), ("pred", pred)):
        vals = np.unique(m)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{name} mask is not binary, found values {vals[:8]}")
    return gt.astype(bool), pred.astype(bool)


def jaccard(gt: np.ndarray, pred: np.ndarray) -> float:
    """Intersection over union of two binary masks.

    Two empty masks agree perfectly and score 1.0.
    """
    gt, pred = _check_mask_pair(gt, pred)
    inter = int(np.logical_and(gt, pred).sum())
    union = int(np.logical_or(gt, pred).sum())
    if union == 0:
        return 1.0
    return inter / union


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbor.

    Pixels outside the image count as background, so foreground touching the
    border is boundary.
    """
    m = np.asarray(mask).astype(bool)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-d, got shape {m.shape}")
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~interior


def _disk_kernel(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.ogrid[-r:r + 1, -r:r + 1]
    return (yy * yy + xx * xx <= r * r).astype(np.uint8)


def boundary_tolerance(shape: tuple[int, int]) -> int:
    """Default matching radius: 0.008 of the image diagonal, rounded up."""
    h, w = shape
    return int(math.ceil(BOUNDARY_TOL_FRACTION * math.hypot(h, w)))


def boundary_f(gt: np.ndarray, pred: np.ndarray, tol_px: int | None = None) -> float:
    """Boundary F-measure of two binary masks.

    Boundaries are extracted with the 4-neighbor rule, then each side is
    dilated by a disk of the tolerance radius; precision is the fraction of
    predicted boundary pixels falling inside the dilated ground-truth
    boundary and recall the converse. Both boundaries empty scores 1.0,
    exactly one empty scores 0.0, and zero precision plus zero recall
    scores 0.0.
    """
    gt, pred = _check_mask_pair(gt, pred)
    gt_b = mask_boundary(gt)
    pred_b = mask_boundary(pred)
    n_gt = int(gt_b.sum())
    n_pred = int(pred_b.sum())
    if n_gt == 0 and n_pred == 0:
        return 1.0
    if n_gt == 0 or n_pred == 0:
        return 0.0
    r = boundary_tolerance(gt.shape) if tol_px is None else int(tol_px)
    if r > 0:
        kernel = _disk_kernel(r)
        gt_dil = cv2.dilate(gt_b.astype(np.uint8), kernel) > 0
        pred_dil = cv2.dilate(pred_b.astype(np.uint8), kernel) > 0
    else:
        gt_dil = gt_b
        pred_dil = pred_b
    precision = float(np.logical_and(pred_b, gt_dil).sum()) / n_pred
    recall = float(np.logical_and(gt_b, pred_dil).sum()) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class FrameScore:
    sequence: str
    frame: str
    j: float
    f: float

    @property
    def g(self) -> float:
        return 0.5 * (self.j + self.f)


@dataclass
class EvalReport:
    """Per-frame scores plus sequence and dataset aggregates."""

    frames: list[FrameScore] = field(default_factory=list)

    def sequences(self) -> list[str]:
        seen = []
        for fs in self.frames:
            if fs.sequence not in seen:
                seen.append(fs.sequence)
        return seen

    def sequence_means(self) -> dict[str, dict[str, float]]:
        out = {}
        for seq in self.sequences():
            rows = [fs for fs in self.frames if fs.sequence == seq]
            j = float(np.mean([fs.j for fs in rows]))
            f = float(np.mean([fs.f for fs in rows]))
            out[seq] = {"J": j, "F": f, "G": 0.5 * (j + f), "frames": len(rows)}
        return out

    def dataset_means(self) -> dict[str, float]:
        per_seq = self.sequence_means()
        if not per_seq:
            raise ValueError("report holds no frames")
        j = float(np.mean([m["J"] for m in per_seq.values()]))
        f = float(np.mean([m["F"] for m in per_seq.values()]))
        return {
            "J": j,
            "F": f,
            "G": 0.5 * (j + f),
            "sequences": len(per_seq),
            "frames": len(self.frames),
        }

    def group_means(self, key) -> dict[str, dict[str, float]]:
        """Average sequence means over groups of sequences.

        key maps a sequence name to its group label, e.g. stripping a
        trailing instance suffix to pool repeated scenes.
        """
        per_seq = self.sequence_means()
        groups: dict[str, list[dict[str, float]]] = {}
        for seq, means in per_seq.items():
            groups.setdefault(key(seq), []).append(means)
        out = {}
        for label, rows in groups.items():
            j = float(np.mean([m["J"] for m in rows]))
            f = float(np.mean([m["F"] for m in rows]))
            out[label] = {"J": j, "F": f, "G": 0.5 * (j + f), "sequences": len(rows)}
        return out

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset_means(),
            "per_sequence": self.sequence_means(),
        }

    def write_json(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["sequence", "frame", "J", "F", "G"])
            for fs in self.frames:
                writer.writerow([fs.sequence, fs.frame,
                                 f"{fs.j:.6f}", f"{fs.f:.6f}", f"{fs.g:.6f}"])


def _load_binary_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 0).astype(np.uint8)


def evaluate_dataset(pred_root: str | Path, gt_root: str | Path,
                     tol_px: int | None = None, jobs: int = 1) -> EvalReport:
    """Score every annotated frame of every sequence under gt_root.

    Both roots hold one directory per sequence with one PNG per frame.
    Ground truth drives enumeration: frames without an annotation are
    skipped, and an annotated frame without a prediction is an error.
    """
    pred_root = Path(pred_root)
    gt_root = Path(gt_root)
    if not gt_root.is_dir():
        raise DataLayoutError(f"ground-truth root {gt_root} is not a directory")
    seq_dirs = sorted(d for d in gt_root.iterdir() if d.is_dir())
    if not seq_dirs:
        raise DataLayoutError(f"no sequence directories under {gt_root}")

    pairs: list[tuple[str, str, Path, Path]] = []
    for sd in seq_dirs:
        gt_files = sorted(sd.glob("*.png"))
        if not gt_files:
            raise DataLayoutError(f"sequence '{sd.name}': no annotation files")
        for gf in gt_files:
            pf = pred_root / sd.name / gf.name
            if not pf.exists():
                raise DataLayoutError(
                    f"sequence '{sd.name}' frame '{gf.stem}': missing prediction {pf}")
            pairs.append((sd.name, gf.stem, gf, pf))

    def score(item: tuple[str, str, Path, Path]) -> FrameScore:
        seq, frame, gf, pf = item
        gt = _load_binary_png(gf)
        pred = _load_binary_png(pf)
        if gt.shape != pred.shape:
            raise DataLayoutError(
                f"sequence '{seq}' frame '{frame}': prediction shape {pred.shape} "
                f"does not match annotation shape {gt.shape}")
        return FrameScore(seq, frame, jaccard(gt, pred), boundary_f(gt, pred, tol_px))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            frames = list(pool.map(score, pairs))
    else:
        frames = [score(p) for p in pairs]
    return EvalReport(frames=frames)
