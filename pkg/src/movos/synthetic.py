"""Synthetic dataset generator for desk-scale experiments.

Scenes are one or two bright rigid shapes translating over a darker textured
background. Because the shapes move rigidly, masks and flow come from the
same rasterized support: the mask is the union of supports and the flow
inside each support equals the shape's velocity exactly, pointing at the
frame's pairing target. Still frames for the saliency task are drawn
independently from the same scene family.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .data import Sample, VideoSequence
from .flow import FlowField, flow_to_rgb, pair_frames, write_flo

BACKGROUND_RANGE = (0.05, 0.45)
SHAPE_COLOR_RANGE = (0.6, 1.0)
SPEED_RANGE = (1.0, 3.0)


@dataclass
class SynthConfig:
    n_sequences: int = 4
    frames_per_seq: int = 8
    resolution: int = 64
    n_sod: int = 0
    max_shapes: int = 2
    speed_range: tuple[float, float] = SPEED_RANGE


@dataclass
class MovingShape:
    """A rigid shape translating at constant velocity, in pixel units."""

    kind: str
    color: np.ndarray
    cx: float
    cy: float
    vx: float
    vy: float
    half_w: float
    half_h: float

    def support(self, resolution: int, t: int) -> np.ndarray:
        cx = self.cx + t * self.vx
        cy = self.cy + t * self.vy
        yy, xx = np.mgrid[0:resolution, 0:resolution]
        if self.kind == "disk":
            return (xx - cx) ** 2 + (yy - cy) ** 2 <= self.half_w ** 2
        if self.kind == "rect":
            return (np.abs(xx - cx) <= self.half_w) & (np.abs(yy - cy) <= self.half_h)
        raise ValueError(f"unknown shape kind '{self.kind}'")


def _coarse_texture(resolution: int, rng: np.random.Generator,
                    lo: float, hi: float) -> np.ndarray:
    cells = max(resolution // 8, 2)
    grid = rng.random((cells, cells, 3)).astype(np.float32)
    tex = cv2.resize(grid, (resolution, resolution), interpolation=cv2.INTER_LINEAR)
    return (lo + (hi - lo) * tex).astype(np.float32)


def _random_shape(resolution: int, n_frames: int, rng: np.random.Generator,
                  speed_range: tuple[float, float], moving: bool = True) -> MovingShape:
    kind = "disk" if rng.random() < 0.5 else "rect"
    if kind == "disk":
        half_w = half_h = float(rng.uniform(resolution / 10, resolution / 6))
    else:
        half_w = float(rng.uniform(resolution / 12, resolution / 8))
        half_h = float(rng.uniform(resolution / 12, resolution / 8))
    color = rng.uniform(*SHAPE_COLOR_RANGE, size=3).astype(np.float32)

    travel_frames = max(n_frames - 1, 1)
    vx = vy = 0.0
    if moving:
        vx = float(rng.uniform(*speed_range)) * (1 if rng.random() < 0.5 else -1)
        vy = float(rng.uniform(*speed_range)) * (1 if rng.random() < 0.5 else -1)

    def place(v: float, extent: float) -> tuple[float, float]:
        margin = extent + 2.0
        lo = margin + max(0.0, -v * travel_frames)
        hi = resolution - margin - max(0.0, v * travel_frames)
        return lo, hi

    for _ in range(32):
        lo_x, hi_x = place(vx, half_w)
        lo_y, hi_y = place(vy, half_h)
        if lo_x < hi_x and lo_y < hi_y:
            break
        vx *= 0.7
        vy *= 0.7
    cx = float(rng.uniform(lo_x, hi_x))
    cy = float(rng.uniform(lo_y, hi_y))
    return MovingShape(kind=kind, color=color, cx=cx, cy=cy,
                       vx=vx, vy=vy, half_w=half_w, half_h=half_h)


def render_frame(background: np.ndarray, shapes: list[MovingShape],
                 t: int, n_frames: int) -> Sample:
    """Rasterize one frame: image, mask, and exact flow toward the paired frame.

    Shapes paint in list order, later shapes occluding earlier ones in both
    color and flow. The last frame pairs backward, so its flow is the
    negated velocity.
    """
    resolution = background.shape[0]
    image = background.copy()
    mask = np.zeros((resolution, resolution), dtype=np.uint8)
    u = np.zeros((resolution, resolution), dtype=np.float32)
    v = np.zeros((resolution, resolution), dtype=np.float32)
    src, tgt = pair_frames(t, n_frames)
    direction = float(tgt - src)
    for sh in shapes:
        sup = sh.support(resolution, t)
        image[sup] = sh.color
        mask[sup] = 1
        u[sup] = direction * sh.vx
        v[sup] = direction * sh.vy
    field = FlowField(u=u, v=v, source_frame=src, target_frame=tgt)
    return Sample(image=image, mask=mask, validity=1,
                  motion=flow_to_rgb(field), flow=field)


def generate_synthetic_dataset(cfg: SynthConfig,
                               rng: np.random.Generator) -> tuple[list[VideoSequence], list[Sample]]:
    """Generate (video sequences, saliency stills) from one RNG stream."""
    if cfg.resolution < 32:
        raise ValueError(f"resolution must be >= 32, got {cfg.resolution}")
    if cfg.frames_per_seq < 2:
        raise ValueError(f"frames_per_seq must be >= 2, got {cfg.frames_per_seq}")
    if cfg.max_shapes < 1:
        raise ValueError(f"max_shapes must be >= 1, got {cfg.max_shapes}")

    sequences = []
    for s in range(cfg.n_sequences):
        background = _coarse_texture(cfg.resolution, rng, *BACKGROUND_RANGE)
        n_shapes = int(rng.integers(1, cfg.max_shapes + 1))
        shapes = [_random_shape(cfg.resolution, cfg.frames_per_seq, rng, cfg.speed_range)
                  for _ in range(n_shapes)]
        name = f"seq{s:04d}"
        samples = []
        for t in range(cfg.frames_per_seq):
            sample = render_frame(background, shapes, t, cfg.frames_per_seq)
            sample.name = f"{name}/{t:05d}"
            samples.append(sample)
        sequences.append(VideoSequence(name=name, samples=samples))

    stills = []
    for i in range(cfg.n_sod):
        background = _coarse_texture(cfg.resolution, rng, *BACKGROUND_RANGE)
        n_shapes = int(rng.integers(1, cfg.max_shapes + 1))
        shapes = [_random_shape(cfg.resolution, 1, rng, cfg.speed_range, moving=False)
                  for _ in range(n_shapes)]
        image = background.copy()
        mask = np.zeros((cfg.resolution, cfg.resolution), dtype=np.uint8)
        for sh in shapes:
            sup = sh.support(cfg.resolution, 0)
            image[sup] = sh.color
            mask[sup] = 1
        stills.append(Sample(image=image, mask=mask, validity=0, name=f"sod{i:05d}"))
    return sequences, stills


def _save_rgb_png(image: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def _save_mask_png(mask: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def write_vos_dataset(sequences: list[VideoSequence], root: str | Path) -> None:
    """Write sequences in the JPEGImages/ Annotations/ Flows/ layout (PNG frames)."""
    root = Path(root)
    for seq in sequences:
        for sample in seq.samples:
            stem = sample.name.split("/")[-1]
            _save_rgb_png(sample.image, root / "JPEGImages" / seq.name / f"{stem}.png")
            _save_mask_png(sample.mask, root / "Annotations" / seq.name / f"{stem}.png")
            write_flo(sample.flow, root / "Flows" / seq.name / f"{stem}.flo")


def write_sod_dataset(samples: list[Sample], root: str | Path) -> None:
    """Write stills in the Images/ Masks/ layout."""
    root = Path(root)
    for sample in samples:
        _save_rgb_png(sample.image, root / "Images" / f"{sample.name}.png")
        _save_mask_png(sample.mask, root / "Masks" / f"{sample.name}.png")
