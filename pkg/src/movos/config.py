"""Flat key = value run configuration.

One file drives a training run. Keys are typed against a fixed registry;
unknown keys and malformed values are rejected with the offending line
number so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    """Training run settings, defaulting to the desk-scale recipe."""

    vos_root: str | None = None
    sod_root: str | None = None
    out_dir: str | None = None
    steps: int = 2000
    resolution: int = 64
    batch_size: int = 8
    learning_rate: float = 1e-3
    p_sod: float = 0.75
    seed: int = 0
    freeze_norm: bool = True
    channels: tuple[int, ...] = (16, 32, 64, 128)
    threads: int = 1
    flow_max_mag: float | None = None
    sod_pretrain_steps: int = 0


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(int(p) for p in parts)


def _parse_optional_float(text: str) -> float | None:
    if text.lower() in ("", "none"):
        return None
    return float(text)


_REGISTRY: dict[str, tuple] = {
    "vos_root": (str, "path to the video dataset root"),
    "sod_root": (str, "path to the still-image dataset root"),
    "out_dir": (str, "directory for checkpoints and logs"),
    "steps": (int, "number of optimization steps"),
    "resolution": (int, "square training resolution"),
    "batch_size": (int, "samples per step"),
    "learning_rate": (float, "Adam learning rate"),
    "p_sod": (float, "probability of drawing a still-image sample per slot"),
    "seed": (int, "RNG seed"),
    "freeze_norm": (_parse_bool, "freeze normalization layers"),
    "channels": (_parse_int_tuple, "encoder channel widths, comma separated"),
    "threads": (int, "torch thread count"),
    "flow_max_mag": (_parse_optional_float, "fixed flow normalization, or none"),
    "sod_pretrain_steps": (int, "still-image-only warmup steps before the main run"),
}


def parse_config(path: str | Path) -> RunConfig:
    """Parse a flat config file into a RunConfig.

    Lines are 'key = value'; blank lines and text after # are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    assert set(_REGISTRY) == known
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _REGISTRY:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        parser, description = _REGISTRY[key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError):
            raise ConfigError(
                f"{path}:{lineno}: invalid value '{value}' for '{key}' ({description})")
        setattr(cfg, key, parsed)
    return cfg
