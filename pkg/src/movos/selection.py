"""Inference, confidence scoring, and adaptive output selection.

At test time the network runs twice per frame, once with the flow rendering
and once with the RGB frame standing in for it. Each pass yields a
foreground probability map; a confidence score totals how far pixels sit
inside the near-certain bands at both ends of [0, 1], and the more confident
pass wins the frame. Fixed fusion baselines (input, feature, output
averaging) and multi-scale flip augmentation share the same plumbing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch

from .data import VideoSequence
from .errors import DataLayoutError
from .network import fuse

CONFIDENCE_BAND = 0.05
MASK_THRESHOLD = 0.5
TTA_SCALES = (48, 64, 112)

MODES = ("flow_only", "image_only", "select", "input", "feature", "output")
FUSION_MODES = ("input", "feature", "output")

_BRANCH_OF_MODE = {
    "flow_only": "flow",
    "image_only": "image",
    "select": None,
    "input": "input",
    "feature": "feature",
    "output": "output",
}


def foreground_map(logits: np.ndarray) -> np.ndarray:
    """Per-pixel foreground probability from (2, H, W) logits.

    The two-class softmax reduces to a sigmoid of the logit difference;
    computed branch-wise so extreme logits neither overflow nor underflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[0] != 2:
        raise ValueError(f"logits must be (2, H, W), got {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    d = logits[1] - logits[0]
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def confidence_map(omega: np.ndarray, h: float = CONFIDENCE_BAND) -> np.ndarray:
    """Distance of each probability into the confident bands near 0 and 1.

    Pixels below h contribute h - omega, pixels above 1 - h contribute
    omega - 1 + h, everything between contributes nothing.
    """
    if not 0.0 <= h <= 0.5:
        raise ValueError(f"band width h must be in [0, 0.5], got {h}")
    omega = np.asarray(omega, dtype=np.float64)
    phi = np.zeros_like(omega)
    low = omega < h
    high = omega > 1.0 - h
    phi[low] = h - omega[low]
    phi[high] = omega[high] - (1.0 - h)
    return phi


def confidence_score(phi: np.ndarray) -> float:
    """Total confidence: the sum of the band distances over all pixels."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.size and float(phi.min()) < 0.0:
        raise ValueError("confidence map has negative entries")
    return float(phi.sum())


def quantize(omega: np.ndarray, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """Binarize a probability map; the threshold itself maps to background."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(omega) > threshold).astype(np.uint8)


@dataclass
class PredictionOutput:
    """One pass's result: probabilities, confidence, and provenance.

    logits is None for augmentation-averaged outputs, where no single logit
    map exists.
    """

    omega: np.ndarray
    phi: np.ndarray
    alpha: float
    source: str
    logits: np.ndarray | None = None


def prediction_output(logits: np.ndarray, h: float = CONFIDENCE_BAND,
                      source: str = "flow") -> PredictionOutput:
    omega = foreground_map(logits)
    phi = confidence_map(omega, h)
    return PredictionOutput(omega=omega, phi=phi, alpha=confidence_score(phi),
                            source=source, logits=np.asarray(logits))


def _omega_output(omega: np.ndarray, h: float, source: str) -> PredictionOutput:
    phi = confidence_map(omega, h)
    return PredictionOutput(omega=omega, phi=phi, alpha=confidence_score(phi), source=source)


def select_output(image_out: PredictionOutput, flow_out: PredictionOutput) -> PredictionOutput:
    """Pick the more confident of the two passes; ties go to flow."""
    if image_out.omega.shape != flow_out.omega.shape:
        raise ValueError(
            f"candidate maps must share a shape, got {image_out.omega.shape} "
            f"vs {flow_out.omega.shape}")
    return flow_out if flow_out.alpha >= image_out.alpha else image_out


def _to_tensor(image: np.ndarray) -> torch.Tensor:
    arr = np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32)
    return torch.from_numpy(arr).unsqueeze(0)


def _branch_logits(model, image_t: torch.Tensor, motion_t: torch.Tensor,
                   branch: str) -> torch.Tensor:
    if branch == "flow":
        return model(image_t, motion_t)
    if branch == "image":
        return model(image_t, image_t)
    if branch == "input":
        return model(image_t, (image_t + motion_t) / 2)
    if branch == "feature":
        appearance = model.encode(image_t, "appearance")
        m_img = model.encode(image_t, "motion")
        m_flow = model.encode(motion_t, "motion")
        motion = [(a + b) / 2 for a, b in zip(m_img, m_flow)]
        return model.decoder(fuse(appearance, motion))
    if branch == "output":
        return (model(image_t, image_t) + model(image_t, motion_t)) / 2
    raise ValueError(f"unknown inference branch '{branch}'")


def fuse_baseline(mode: str, model, image: np.ndarray, flow_render: np.ndarray,
                  h: float = CONFIDENCE_BAND) -> PredictionOutput:
    """Run one of the fixed fusion baselines at the input's own resolution.

    input averages the two motion-stream inputs, feature averages the two
    motion feature pyramids level-wise, output averages the two logit maps.
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode '{mode}', expected one of {FUSION_MODES}")
    if isinstance(model, torch.nn.Module):
        model.eval()
    with torch.no_grad():
        logits = _branch_logits(model, _to_tensor(image), _to_tensor(flow_render), mode)
    return prediction_output(logits[0].numpy(), h, source=mode)


def snap_scales(scales, factor: int) -> tuple[int, ...]:
    """Snap trial resolutions to the nearest feasible multiple of factor.

    Halfway cases round down and duplicates collapse, preserving order.
    """
    out: list[int] = []
    for s in scales:
        snapped = factor * max(1, math.ceil(s / factor - 0.5))
        if snapped not in out:
            out.append(snapped)
    if not out:
        raise ValueError("no scales given")
    return tuple(out)


def _resize_rgb(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image
    out = cv2.resize(image, (size, size), interpolation=cv2.INTER_CUBIC)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _resize_map(m: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if m.shape == shape:
        return m
    return cv2.resize(m, (shape[1], shape[0]), interpolation=cv2.INTER_LINEAR).astype(np.float64)


def _variant_omega(model, image: np.ndarray, motion: np.ndarray, branch: str,
                   size: int, flipped: bool) -> np.ndarray:
    img = image[:, ::-1] if flipped else image
    mot = motion[:, ::-1] if flipped else motion
    img_t = _to_tensor(_resize_rgb(img, size))
    mot_t = _to_tensor(_resize_rgb(mot, size))
    logits = _branch_logits(model, img_t, mot_t, branch)
    omega = foreground_map(logits[0].numpy())
    if flipped:
        omega = omega[:, ::-1]
    return _resize_map(np.ascontiguousarray(omega), image.shape[:2])


def _branch_omega(model, image: np.ndarray, motion: np.ndarray, branch: str,
                  scales: tuple[int, ...], flip: bool) -> np.ndarray:
    variants = []
    for size in scales:
        for flipped in (False, True) if flip else (False,):
            variants.append(_variant_omega(model, image, motion, branch, size, flipped))
    return np.mean(variants, axis=0)


def tta_infer(model, image: np.ndarray, motion: np.ndarray,
              scales=TTA_SCALES, flip: bool = True) -> np.ndarray:
    """Augmented inference: average the probability map over rescaled and
    mirrored variants, each mapped back to the input's geometry.

    Scales that the encoder cannot ingest are snapped to the nearest valid
    multiple of the model's overall downsampling factor.
    """
    factor = model.config.scale_factor if hasattr(model, "config") else 1
    if isinstance(model, torch.nn.Module):
        model.eval()
    with torch.no_grad():
        return _branch_omega(model, image, motion, "flow",
                             snap_scales(scales, factor), flip)


@dataclass
class SelectionRow:
    frame: int
    name: str
    alpha_image: float | None
    alpha_flow: float | None
    chosen: str


@dataclass
class SelectionLog:
    """Per-frame record of the confidence race within one sequence."""

    sequence: str
    rows: list[SelectionRow]

    def ratios(self) -> dict[str, float] | None:
        decided = [r for r in self.rows if r.chosen in ("image", "flow")]
        if not decided:
            return None
        n_image = sum(1 for r in decided if r.chosen == "image")
        return {
            "image_pct": 100.0 * n_image / len(decided),
            "flow_pct": 100.0 * (len(decided) - n_image) / len(decided),
        }

    def alpha_diffs(self) -> list[tuple[int, float]]:
        return [(r.frame, r.alpha_image - r.alpha_flow) for r in self.rows
                if r.alpha_image is not None and r.alpha_flow is not None]

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "alpha_image", "alpha_flow", "chosen"])
            for r in self.rows:
                writer.writerow([
                    r.frame,
                    "" if r.alpha_image is None else f"{r.alpha_image:.9f}",
                    "" if r.alpha_flow is None else f"{r.alpha_flow:.9f}",
                    r.chosen,
                ])


def infer_sequence(model, sequence: VideoSequence, mode: str, resolution: int,
                   h: float = CONFIDENCE_BAND, threshold: float = MASK_THRESHOLD,
                   tta: bool = False, tta_scales=TTA_SCALES) -> tuple[list[np.ndarray], SelectionLog]:
    """Segment every frame of a sequence.

    Returns binary masks at each frame's native geometry plus the selection
    log. Processing happens at the given square resolution (or the snapped
    augmentation scales when tta is set); probability maps are mapped back
    to native geometry before thresholding, so confidence scores of the two
    passes are always compared on the same footing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode '{mode}', expected one of {MODES}")
    factor = model.config.scale_factor if hasattr(model, "config") else 1
    scales = snap_scales(tta_scales if tta else (resolution,), factor)
    flip = bool(tta)
    if isinstance(model, torch.nn.Module):
        model.eval()

    masks: list[np.ndarray] = []
    rows: list[SelectionRow] = []
    with torch.no_grad():
        for idx, sample in enumerate(sequence.samples):
            image = sample.image
            if mode != "image_only" and sample.motion is None:
                raise DataLayoutError(
                    f"sequence '{sequence.name}' frame '{sample.name}': "
                    f"no flow available for mode '{mode}'")
            motion = sample.motion if sample.motion is not None else image
            if mode == "select":
                image_out = _omega_output(
                    _branch_omega(model, image, motion, "image", scales, flip), h, "image")
                flow_out = _omega_output(
                    _branch_omega(model, image, motion, "flow", scales, flip), h, "flow")
                chosen = select_output(image_out, flow_out)
                omega = chosen.omega
                rows.append(SelectionRow(idx, sample.name, image_out.alpha,
                                         flow_out.alpha, chosen.source))
            else:
                branch = _BRANCH_OF_MODE[mode]
                out = _omega_output(
                    _branch_omega(model, image, motion, branch, scales, flip), h, branch)
                omega = out.omega
                rows.append(SelectionRow(
                    idx, sample.name,
                    out.alpha if mode == "image_only" else None,
                    out.alpha if mode == "flow_only" else None,
                    branch))
            masks.append(quantize(omega, threshold))
    return masks, SelectionLog(sequence=sequence.name, rows=rows)
