"""Dataset loading, resizing, and training batch assembly.

Two kinds of supervision feed the model: video segmentation data with per
frame optical flow, and still image saliency data with no flow at all. Both
are folded into one Sample type distinguished by a validity flag, and batch
assembly substitutes the RGB image for the missing flow rendering through a
single multiplicative index, so the training step never branches on sample
kind.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import DataLayoutError
from .flow import FlowField, flow_to_rgb, read_flo

IMAGE_EXTS = (".jpg", ".jpeg", ".png")
MIN_RESOLUTION = 16


@dataclass
class Sample:
    """One frame with its annotation and, when available, its motion input.

    image: (H, W, 3) float32 in [0, 1].
    mask: (H, W) uint8 in {0, 1}.
    validity: 1 when a real flow rendering exists, 0 otherwise.
    motion: flow rendered as an (H, W, 3) float32 image, or None.
    flow: the raw displacement field, or None.
    """

    image: np.ndarray
    mask: np.ndarray
    validity: int
    motion: np.ndarray | None = None
    flow: FlowField | None = None
    name: str = ""


@dataclass
class VideoSequence:
    name: str
    samples: list[Sample]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class TrainingBatch:
    """Stacked tensors ready for the forward pass, channel-first.

    motion_inputs already carries the substitution: rows with validity 1
    hold the flow rendering, rows with validity 0 hold the image.
    """

    images: np.ndarray
    motion_inputs: np.ndarray
    masks: np.ndarray
    indices: np.ndarray
    names: list[str]


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def _load_gray(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def load_annotation(path: str | Path) -> np.ndarray:
    """Video annotation PNG to a {0, 1} mask: any nonzero label is foreground."""
    return (_load_gray(path) > 0).astype(np.uint8)


def load_saliency_mask(path: str | Path) -> np.ndarray:
    """Saliency PNG to a {0, 1} mask: gray values above half intensity are foreground."""
    return (_load_gray(path).astype(np.float32) / 255.0 > 0.5).astype(np.uint8)


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = (np.asarray(mask).astype(np.uint8) * 255)
    Image.fromarray(arr, mode="L").save(path)


def _frame_files(seq_dir: Path) -> list[Path]:
    return sorted(p for p in seq_dir.iterdir()
                  if p.suffix.lower() in IMAGE_EXTS and p.is_file())


def load_vos_dataset(root: str | Path, flow_max_mag: float | None = None,
                     require_flow: bool = True) -> list[VideoSequence]:
    """Load a video dataset laid out as JPEGImages/ Annotations/ Flows/.

    Each sequence is a directory of frames sorted by filename. Every frame
    must have an annotation; flow files are mandatory unless require_flow
    is False, in which case flow-less frames load with validity 0. Flow
    renderings are normalized per frame unless flow_max_mag pins a shared
    scale.
    """
    root = Path(root)
    img_root = root / "JPEGImages"
    if not img_root.is_dir():
        raise DataLayoutError(f"{root}: missing JPEGImages/ directory")
    seq_dirs = sorted(d for d in img_root.iterdir() if d.is_dir())
    if not seq_dirs:
        raise DataLayoutError(f"{root}: no sequence directories under JPEGImages/")

    sequences = []
    for sd in seq_dirs:
        frames = _frame_files(sd)
        if not frames:
            raise DataLayoutError(f"sequence '{sd.name}': no image frames")
        samples = []
        for p in frames:
            stem = p.stem
            where = f"sequence '{sd.name}' frame '{stem}'"
            ann_path = root / "Annotations" / sd.name / f"{stem}.png"
            if not ann_path.exists():
                raise DataLayoutError(f"{where}: missing annotation {ann_path}")
            image = load_image(p)
            mask = load_annotation(ann_path)
            if mask.shape != image.shape[:2]:
                raise DataLayoutError(
                    f"{where}: annotation shape {mask.shape} does not match "
                    f"image shape {image.shape[:2]}")
            flo_path = root / "Flows" / sd.name / f"{stem}.flo"
            if flo_path.exists():
                fl = read_flo(flo_path)
                if fl.shape != image.shape[:2]:
                    raise DataLayoutError(
                        f"{where}: flow shape {fl.shape} does not match "
                        f"image shape {image.shape[:2]}")
                motion = flow_to_rgb(fl, flow_max_mag)
                validity = 1
            elif require_flow:
                raise DataLayoutError(f"{where}: missing flow {flo_path}")
            else:
                fl = None
                motion = None
                validity = 0
            samples.append(Sample(image=image, mask=mask, validity=validity,
                                  motion=motion, flow=fl, name=f"{sd.name}/{stem}"))
        sequences.append(VideoSequence(name=sd.name, samples=samples))
    return sequences


def load_sod_dataset(root: str | Path) -> list[Sample]:
    """Load a saliency dataset laid out as Images/ Masks/.

    Images and masks pair by stem; an unpaired file on either side is an
    error. All samples load with validity 0 and no motion input.
    """
    root = Path(root)
    img_dir = root / "Images"
    mask_dir = root / "Masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise DataLayoutError(f"{root}: expected Images/ and Masks/ directories")
    images = {p.stem: p for p in _frame_files(img_dir)}
    masks = {p.stem: p for p in sorted(mask_dir.glob("*.png"))}
    if not images:
        raise DataLayoutError(f"{root}: no images under Images/")
    for stem in sorted(set(masks) - set(images)):
        raise DataLayoutError(f"mask '{stem}' has no matching image")
    samples = []
    for stem in sorted(images):
        if stem not in masks:
            raise DataLayoutError(f"image '{stem}' has no matching mask")
        image = load_image(images[stem])
        mask = load_saliency_mask(masks[stem])
        if mask.shape != image.shape[:2]:
            raise DataLayoutError(
                f"image '{stem}': mask shape {mask.shape} does not match "
                f"image shape {image.shape[:2]}")
        samples.append(Sample(image=image, mask=mask, validity=0, name=stem))
    return samples


def resize_sample(sample: Sample, resolution: int) -> Sample:
    """Resize a sample to resolution x resolution.

    Images and flow renderings are resized bicubically and clamped back to
    [0, 1] since bicubic overshoots. Video masks are label maps and resize
    nearest-neighbor; saliency masks resize bicubically and re-binarize at
    0.5. The raw flow field does not survive a geometry change and is
    dropped.
    """
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"target resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    h, w = sample.mask.shape
    if (h, w) == (resolution, resolution):
        return dataclasses.replace(sample)
    size = (resolution, resolution)
    image = np.clip(cv2.resize(sample.image, size, interpolation=cv2.INTER_CUBIC), 0.0, 1.0)
    motion = None
    if sample.motion is not None:
        motion = np.clip(cv2.resize(sample.motion, size, interpolation=cv2.INTER_CUBIC), 0.0, 1.0)
    if sample.validity == 1:
        mask = cv2.resize(sample.mask, size, interpolation=cv2.INTER_NEAREST)
    else:
        soft = cv2.resize(sample.mask.astype(np.float32), size, interpolation=cv2.INTER_CUBIC)
        mask = (soft > 0.5).astype(np.uint8)
    return Sample(image=image.astype(np.float32), mask=mask, validity=sample.validity,
                  motion=None if motion is None else motion.astype(np.float32),
                  flow=None, name=sample.name)


def sample_training_batch(vos: list[VideoSequence], sod: list[Sample],
                          p_sod: float, batch_size: int, resolution: int,
                          rng: np.random.Generator) -> TrainingBatch:
    """Draw a mixed batch: each slot is saliency with probability p_sod.

    Saliency slots have no flow, so their motion input is the image itself,
    substituted through the validity index: m = i * flow + (1 - i) * image.
    The all-zero flow slots for saliency rows exist only here, at batch
    assembly; samples never carry placeholder arrays.
    """
    if batch_size <= 0:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    if not 0.0 <= p_sod <= 1.0:
        raise ValueError(f"p_sod must be in [0, 1], got {p_sod}")
    vos_flat = [s for seq in vos for s in seq.samples]
    if not vos_flat:
        raise ValueError("video dataset is empty")
    if not sod:
        raise ValueError("saliency dataset is empty")

    b, r = batch_size, resolution
    images = np.zeros((b, 3, r, r), dtype=np.float32)
    flows = np.zeros((b, 3, r, r), dtype=np.float32)
    masks = np.zeros((b, 1, r, r), dtype=np.float32)
    indices = np.zeros((b, 1, 1, 1), dtype=np.float32)
    names = []
    take_sod = rng.random(b) < p_sod
    for i in range(b):
        if take_sod[i]:
            s = sod[int(rng.integers(len(sod)))]
        else:
            s = vos_flat[int(rng.integers(len(vos_flat)))]
        s = resize_sample(s, r)
        images[i] = s.image.transpose(2, 0, 1)
        if s.validity == 1:
            flows[i] = s.motion.transpose(2, 0, 1)
        indices[i, 0, 0, 0] = s.validity
        masks[i, 0] = s.mask
        names.append(s.name)
    motion_inputs = indices * flows + (1.0 - indices) * images
    return TrainingBatch(images=images, motion_inputs=motion_inputs,
                         masks=masks, indices=indices, names=names)
