"""Two-stream segmentation network.

An appearance encoder and an architecturally identical but parameter
independent motion encoder produce feature pyramids that are fused by
level-wise addition, so the motion stream can ingest either a flow rendering
or the RGB frame itself without any structural change. A refining decoder
with convolutional attention walks the fused pyramid coarse to fine and
emits two-channel segmentation logits at input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    channels fixes one encoder level per entry; level k (1-based) sits at
    1/2^(k+1) of the input resolution, so inputs must be divisible by
    2^(depth+1).
    """

    channels: tuple[int, ...] = (16, 32, 64, 128)
    in_channels: int = 3
    decoder_width: int = 32
    cbam_reduction: int = 4
    spatial_kernel: int = 7

    @property
    def depth(self) -> int:
        return len(self.channels)

    @property
    def scale_factor(self) -> int:
        return 2 ** (self.depth + 1)


def check_divisible(height: int, width: int, factor: int) -> None:
    if height % factor or width % factor:
        raise ValueError(
            f"input {height}x{width} is not divisible by {factor}; "
            f"pad or resize the input to a multiple of {factor}")


class EncoderBlock(nn.Module):
    def __init__(self, cin: int, cout: int, pool: int):
        super().__init__()
        self.pool = nn.MaxPool2d(pool)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = nn.BatchNorm2d(cout)

    def forward(self, x):
        x = self.pool(x)
        x = F.relu(self.norm1(self.conv1(x)))
        return F.relu(self.norm2(self.conv2(x)))


class Encoder(nn.Module):
    """Stack of pooled conv blocks; block k halves resolution, block 1 quarters it."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        chans = (cfg.in_channels,) + tuple(cfg.channels)
        self.blocks = nn.ModuleList(
            EncoderBlock(chans[k], chans[k + 1], pool=4 if k == 0 else 2)
            for k in range(cfg.depth))

    def forward(self, x) -> list[torch.Tensor]:
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats


class ChannelGate(nn.Module):
    def __init__(self, channels: int, reduction: int):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = nn.Conv2d(channels, hidden, 1, bias=False)
        self.fc2 = nn.Conv2d(hidden, channels, 1, bias=False)

    def forward(self, x):
        avg = self.fc2(F.relu(self.fc1(F.adaptive_avg_pool2d(x, 1))))
        mx = self.fc2(F.relu(self.fc1(F.adaptive_max_pool2d(x, 1))))
        return torch.sigmoid(avg + mx)


class SpatialGate(nn.Module):
    def __init__(self, kernel: int):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel, padding=kernel // 2, bias=False)

    def forward(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True),
                            x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class CBAM(nn.Module):
    """Sequential channel then spatial attention."""

    def __init__(self, channels: int, reduction: int, kernel: int):
        super().__init__()
        self.channel = ChannelGate(channels, reduction)
        self.spatial = SpatialGate(kernel)

    def forward(self, x):
        x = x * self.channel(x)
        return x * self.spatial(x)


class DecoderBlock(nn.Module):
    """Blend conv, attention refinement, then 2x bilinear upsampling."""

    def __init__(self, cin: int, width: int, reduction: int, kernel: int):
        super().__init__()
        self.blend = nn.Conv2d(cin, width, 3, padding=1)
        self.cbam = CBAM(width, reduction, kernel)

    def forward(self, x):
        x = self.cbam(self.blend(x))
        return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class Decoder(nn.Module):
    """Coarse-to-fine refinement over a fused pyramid.

    Block k consumes the previous decoder state concatenated with the fused
    features of the matching level, in that fixed order. A 1x1 head plus a
    final 2x upsample brings the two-channel logits to input resolution.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        w = cfg.decoder_width
        k = cfg.depth
        cins = [cfg.channels[-1]] + [w + cfg.channels[k - 1 - i] for i in range(1, k)]
        self.blocks = nn.ModuleList(
            DecoderBlock(cin, w, cfg.cbam_reduction, cfg.spatial_kernel) for cin in cins)
        self.head = nn.Conv2d(w, 2, 1)

    def block_features(self, feats: list[torch.Tensor]) -> list[torch.Tensor]:
        if len(feats) != len(self.blocks):
            raise ValueError(f"expected {len(self.blocks)} pyramid levels, got {len(feats)}")
        out = []
        d = None
        for i, block in enumerate(self.blocks):
            skip = feats[len(feats) - 1 - i]
            x = skip if d is None else torch.cat([d, skip], dim=1)
            d = block(x)
            out.append(d)
        return out

    def forward(self, feats: list[torch.Tensor]) -> torch.Tensor:
        d = self.block_features(feats)[-1]
        logits = self.head(d)
        return F.interpolate(logits, scale_factor=2, mode="bilinear", align_corners=False)


def fuse(appearance: list[torch.Tensor], motion: list[torch.Tensor]) -> list[torch.Tensor]:
    """Level-wise additive fusion of two feature pyramids."""
    if len(appearance) != len(motion):
        raise ValueError(f"pyramid depths differ: {len(appearance)} vs {len(motion)}")
    fused = []
    for k, (a, m) in enumerate(zip(appearance, motion), start=1):
        if a.shape != m.shape:
            raise ValueError(f"level {k}: shapes differ, {tuple(a.shape)} vs {tuple(m.shape)}")
        fused.append(a + m)
    return fused


class MotionOptionNet(nn.Module):
    """Appearance stream, optional-motion stream, additive fusion, refining decoder."""

    def __init__(self, config: NetworkConfig | None = None):
        super().__init__()
        self.config = config or NetworkConfig()
        self.app_encoder = Encoder(self.config)
        self.mot_encoder = Encoder(self.config)
        self.decoder = Decoder(self.config)

    def encode(self, x: torch.Tensor, which: str) -> list[torch.Tensor]:
        if x.ndim != 4:
            raise ValueError(f"expected a (batch, channel, H, W) tensor, got shape {tuple(x.shape)}")
        check_divisible(x.shape[-2], x.shape[-1], self.config.scale_factor)
        if which == "appearance":
            return self.app_encoder(x)
        if which == "motion":
            return self.mot_encoder(x)
        raise ValueError(f"unknown encoder '{which}', expected 'appearance' or 'motion'")

    def forward(self, image: torch.Tensor, motion: torch.Tensor) -> torch.Tensor:
        if image.shape != motion.shape:
            raise ValueError(
                f"image and motion inputs must share a shape, got "
                f"{tuple(image.shape)} vs {tuple(motion.shape)}")
        fused = fuse(self.encode(image, "appearance"), self.encode(motion, "motion"))
        return self.decoder(fused)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
