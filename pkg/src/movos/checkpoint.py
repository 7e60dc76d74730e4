"""Checkpoint serialization.

Weights live in a flat .npz archive of little-endian float32 arrays under
stable canonical names, plus a JSON header describing the architecture, so
checkpoints stay readable without torch and survive module renames.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
import torch

from .errors import DataLayoutError
from .network import MotionOptionNet, NetworkConfig

FORMAT_VERSION = 1
META_KEY = "__meta__"

_ENCODER_ALIAS = {"app_encoder": "app", "mot_encoder": "mot"}
_ENCODER_ALIAS_INV = {v: k for k, v in _ENCODER_ALIAS.items()}

_ENC_RE = re.compile(r"^(app_encoder|mot_encoder)\.blocks\.(\d+)\.(.+)$")
_DEC_RE = re.compile(r"^decoder\.blocks\.(\d+)\.(.+)$")
_CANON_ENC_RE = re.compile(r"^(app|mot)\.block(\d+)\.(.+)$")
_CANON_DEC_RE = re.compile(r"^dec\.psi(\d+)\.(.+)$")

_ENC_TAILS = tuple(f"{layer}{i}.{leaf}" for layer, leaves in
                   (("conv", ("weight", "bias")),
                    ("norm", ("weight", "bias", "running_mean", "running_var")))
                   for i in (1, 2) for leaf in leaves)
_DEC_TAILS = ("blend.weight", "blend.bias",
              "cbam.channel.fc1.weight", "cbam.channel.fc2.weight",
              "cbam.spatial.conv.weight")
_CANON_DEC_TAILS = ("blend.weight", "blend.bias",
                    "cbam.fc1.weight", "cbam.fc2.weight", "cbam.spatial.weight")
_HEAD_TAILS = ("weight", "bias")


def to_canonical(key: str) -> str:
    """Map a module state key to its canonical archive name."""
    m = _ENC_RE.match(key)
    if m and m.group(3) in _ENC_TAILS:
        return f"{_ENCODER_ALIAS[m.group(1)]}.block{int(m.group(2)) + 1}.{m.group(3)}"
    m = _DEC_RE.match(key)
    if m and m.group(2) in _DEC_TAILS:
        rest = m.group(2)
        rest = rest.replace("cbam.channel.", "cbam.")
        rest = rest.replace("cbam.spatial.conv", "cbam.spatial")
        return f"dec.psi{int(m.group(1)) + 1}.{rest}"
    if key.startswith("decoder.head.") and key[len("decoder.head."):] in _HEAD_TAILS:
        return "dec.head." + key[len("decoder.head."):]
    raise ValueError(f"cannot map state key '{key}' to the archive naming scheme")


def from_canonical(name: str) -> str:
    """Inverse of to_canonical."""
    m = _CANON_ENC_RE.match(name)
    if m and m.group(3) in _ENC_TAILS:
        return f"{_ENCODER_ALIAS_INV[m.group(1)]}.blocks.{int(m.group(2)) - 1}.{m.group(3)}"
    m = _CANON_DEC_RE.match(name)
    if m and m.group(2) in _CANON_DEC_TAILS:
        rest = m.group(2)
        if rest.startswith("cbam.fc"):
            rest = "cbam.channel." + rest[len("cbam."):]
        elif rest.startswith("cbam.spatial"):
            rest = "cbam.spatial.conv" + rest[len("cbam.spatial"):]
        return f"decoder.blocks.{int(m.group(1)) - 1}.{rest}"
    if name.startswith("dec.head.") and name[len("dec.head."):] in _HEAD_TAILS:
        return "decoder.head." + name[len("dec.head."):]
    raise ValueError(f"unrecognized archive entry '{name}'")


def _normalize(path: str | Path) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    return path


def save_checkpoint(model: MotionOptionNet, path: str | Path,
                    resolution: int | None = None, step: int | None = None) -> Path:
    """Write model weights and running statistics to a flat .npz archive.

    Batch counters are derivable bookkeeping and are not stored. Returns the
    actual path written (a .npz suffix is enforced).
    """
    path = _normalize(path)
    cfg = model.config
    meta = {
        "version": FORMAT_VERSION,
        "depth": cfg.depth,
        "channels": list(cfg.channels),
        "in_channels": cfg.in_channels,
        "decoder_width": cfg.decoder_width,
        "cbam_reduction": cfg.cbam_reduction,
        "spatial_kernel": cfg.spatial_kernel,
    }
    if resolution is not None:
        meta["resolution"] = int(resolution)
    if step is not None:
        meta["step"] = int(step)
    arrays = {}
    for key, tensor in model.state_dict().items():
        if key.endswith("num_batches_tracked"):
            continue
        arrays[to_canonical(key)] = tensor.detach().cpu().numpy().astype("<f4")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{META_KEY: np.bytes_(json.dumps(meta).encode())}, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[MotionOptionNet, dict]:
    """Rebuild a model from an archive; returns (model in eval mode, header dict)."""
    path = Path(path)
    if not path.exists():
        raise DataLayoutError(f"checkpoint {path} does not exist")
    try:
        archive = np.load(path)
    except Exception as exc:
        raise DataLayoutError(f"checkpoint {path} is not a readable archive: {exc}") from exc
    with archive:
        if META_KEY not in archive:
            raise DataLayoutError(f"checkpoint {path}: missing {META_KEY} header")
        meta = json.loads(bytes(archive[META_KEY].item()).decode())
        if meta.get("version") != FORMAT_VERSION:
            raise DataLayoutError(
                f"checkpoint {path}: unsupported format version {meta.get('version')}")
        cfg = NetworkConfig(
            channels=tuple(meta["channels"]),
            in_channels=meta.get("in_channels", 3),
            decoder_width=meta.get("decoder_width", 32),
            cbam_reduction=meta.get("cbam_reduction", 4),
            spatial_kernel=meta.get("spatial_kernel", 7),
        )
        model = MotionOptionNet(cfg)
        state = model.state_dict()
        for key in list(state.keys()):
            if key.endswith("num_batches_tracked"):
                continue
            name = to_canonical(key)
            if name not in archive:
                raise DataLayoutError(f"checkpoint {path}: missing parameter '{name}'")
            arr = archive[name]
            if tuple(arr.shape) != tuple(state[key].shape):
                raise DataLayoutError(
                    f"checkpoint {path}: parameter '{name}' has shape {tuple(arr.shape)}, "
                    f"expected {tuple(state[key].shape)}")
            state[key] = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))
    model.load_state_dict(state)
    model.eval()
    return model, meta
