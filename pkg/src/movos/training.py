"""Collaborative training over video and still-image supervision.

One optimization loop serves both tasks: every batch mixes flow-carrying
video frames with flow-less stills, the stills entering through the image
substitution made at batch assembly. Normalization layers stay frozen, the
loss is pixel-mean cross entropy, and the optimizer is Adam with standard
moments. Runs are reproducible given a seed and a thread count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Sample, TrainingBatch, VideoSequence, sample_training_batch
from .errors import NumericError
from .network import MotionOptionNet, NetworkConfig

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Full-scale settings assume pretrained backbones and a GPU; the desk-scale
# values used throughout the examples and tests are resolution 64, batch 8,
# learning rate 1e-3.
DEFAULT_RESOLUTION = 384
DEFAULT_BATCH_SIZE = 16
DEFAULT_LEARNING_RATE = 1e-5


@dataclass
class TrainConfig:
    steps: int
    resolution: int = DEFAULT_RESOLUTION
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    p_sod: float = 0.75
    seed: int = 0
    freeze_norm: bool = True
    channels: tuple[int, ...] = (16, 32, 64, 128)
    threads: int = 1
    checkpoint_every: int | None = None


def cross_entropy_loss(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Two-class cross entropy averaged over all pixels of the batch.

    logits is (B, 2, H, W) or (2, H, W); mask matches spatially, holds only
    0 and 1, and may carry a singleton channel dim.
    """
    if logits.ndim == 3:
        logits = logits.unsqueeze(0)
    if logits.ndim != 4 or logits.shape[1] != 2:
        raise ValueError(f"logits must be (batch, 2, H, W), got {tuple(logits.shape)}")
    if mask.ndim == 2:
        mask = mask.unsqueeze(0)
    if mask.ndim == 4 and mask.shape[1] == 1:
        mask = mask[:, 0]
    if mask.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ValueError(
            f"mask shape {tuple(mask.shape)} does not match logits {tuple(logits.shape)}")
    if not torch.logical_or(mask == 0, mask == 1).all():
        raise ValueError("mask must be binary")
    return F.cross_entropy(logits, mask.long(), reduction="mean")


def freeze_normalization(model: torch.nn.Module) -> None:
    """Pin all batch-norm layers: running statistics stop updating and the
    affine parameters stop receiving gradients."""
    for m in model.modules():
        if isinstance(m, torch.nn.modules.batchnorm._BatchNorm):
            m.eval()
            if m.weight is not None:
                m.weight.requires_grad_(False)
            if m.bias is not None:
                m.bias.requires_grad_(False)


def batch_to_tensors(batch: TrainingBatch) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    images = torch.from_numpy(batch.images)
    motions = torch.from_numpy(batch.motion_inputs)
    masks = torch.from_numpy(batch.masks)
    return images, motions, masks


def train_step(model: MotionOptionNet, optimizer: torch.optim.Optimizer,
               batch: TrainingBatch, step: int = 0) -> float:
    """One forward/backward/update pass; returns the scalar loss.

    A non-finite loss aborts before the backward pass with the step index
    and the provenance of every sample in the offending batch.
    """
    images, motions, masks = batch_to_tensors(batch)
    logits = model(images, motions)
    loss = cross_entropy_loss(logits, masks)
    if not torch.isfinite(loss):
        raise NumericError(
            f"non-finite loss ({loss.item()}) at step {step}; "
            f"batch samples: {', '.join(batch.names)}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def train(cfg: TrainConfig, vos: list[VideoSequence], sod: list[Sample],
          out_dir: str | Path, init_checkpoint: str | Path | None = None) -> Path:
    """Run the full loop and return the path of the final checkpoint.

    Interim checkpoints land every cfg.checkpoint_every steps, defaulting
    to a tenth of the run; a loss log with the running still-image fraction
    is written alongside.
    """
    if cfg.steps < 1:
        raise ValueError(f"steps must be >= 1, got {cfg.steps}")
    net_cfg = NetworkConfig(channels=tuple(cfg.channels))
    if cfg.resolution % net_cfg.scale_factor:
        raise ValueError(
            f"resolution {cfg.resolution} is not divisible by {net_cfg.scale_factor}; "
            f"choose a multiple of {net_cfg.scale_factor}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.set_num_threads(cfg.threads)
    torch.manual_seed(cfg.seed)
    if init_checkpoint is not None:
        model, meta = load_checkpoint(init_checkpoint)
        if tuple(meta["channels"]) != tuple(cfg.channels):
            raise ValueError(
                f"initial checkpoint channels {meta['channels']} do not match "
                f"configured channels {list(cfg.channels)}")
    else:
        model = MotionOptionNet(net_cfg)
    model.train()
    if cfg.freeze_norm:
        freeze_normalization(model)

    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=cfg.learning_rate,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)
    rng = np.random.default_rng(cfg.seed)
    every = cfg.checkpoint_every or max(cfg.steps // 10, 1)

    rows = []
    sod_seen = 0
    total = 0
    for step in range(1, cfg.steps + 1):
        batch = sample_training_batch(vos, sod, cfg.p_sod, cfg.batch_size,
                                      cfg.resolution, rng)
        loss = train_step(model, optimizer, batch, step)
        sod_seen += int(np.sum(batch.indices == 0))
        total += cfg.batch_size
        rows.append((step, loss, sod_seen / total))
        if step % every == 0:
            save_checkpoint(model, out_dir / f"checkpoint_{step:06d}.npz",
                            resolution=cfg.resolution, step=step)

    final = save_checkpoint(model, out_dir / "checkpoint.npz",
                            resolution=cfg.resolution, step=cfg.steps)
    with open(out_dir / "loss_log.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "sod_fraction"])
        for step, loss, frac in rows:
            writer.writerow([step, f"{loss:.6f}", f"{frac:.4f}"])
    return final
