"""Optical flow utilities.

Covers the pieces of the pipeline that touch raw flow: forward frame pairing,
the binary .flo codec, rendering a flow field to an RGB image with the
standard color wheel, and controlled corruption for robustness experiments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataLayoutError

FLO_MAGIC = b"PIEH"
FLO_MAGIC_FLOAT = 202021.25

# Color wheel bin counts, in hue order.
_RY, _YG, _GC, _CB, _BM, _MR = 15, 6, 4, 11, 13, 6

CORRUPTION_MODES = ("noise", "zero", "shuffle")


@dataclass
class FlowField:
    """Dense displacement field in pixels per frame.

    u and v are (H, W) float32 arrays holding the horizontal and vertical
    displacement of each pixel from source_frame toward target_frame.
    """

    u: np.ndarray
    v: np.ndarray
    source_frame: int = 0
    target_frame: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


def pair_frames(t: int, length: int) -> tuple[int, int]:
    """Return (source, target) indices for estimating flow at frame t.

    Every frame pairs with its successor; the last frame, which has none,
    pairs with its predecessor instead so each frame gets a flow field.
    """
    if length < 2:
        raise ValueError(f"need at least 2 frames to pair, got {length}")
    if not 0 <= t < length:
        raise ValueError(f"frame index {t} out of range for {length} frames")
    if t < length - 1:
        return t, t + 1
    return t, t - 1


def read_flo(path: str | Path) -> FlowField:
    """Read a Middlebury .flo file.

    Layout: 4-byte magic 'PIEH' (202021.25 as little-endian float32), then
    width and height as int32, then H*W*2 float32 values interleaved (u, v)
    in row-major order.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise DataLayoutError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != FLO_MAGIC:
        raise DataLayoutError(f"{path}: bad magic {raw[:4]!r}, expected {FLO_MAGIC!r}")
    w, h = struct.unpack("<ii", raw[4:12])
    if w <= 0 or h <= 0:
        raise DataLayoutError(f"{path}: invalid dimensions {w}x{h}")
    expect = 12 + 8 * w * h
    if len(raw) != expect:
        raise DataLayoutError(f"{path}: expected {expect} bytes for {w}x{h}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    u = np.ascontiguousarray(data[:, :, 0])
    v = np.ascontiguousarray(data[:, :, 1])
    return FlowField(u=u, v=v)


def write_flo(flow: FlowField, path: str | Path) -> None:
    """Write a FlowField as a Middlebury .flo file (little-endian)."""
    u = np.asarray(flow.u, dtype="<f4")
    v = np.asarray(flow.v, dtype="<f4")
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError(f"u/v must be matching 2-d arrays, got {u.shape} and {v.shape}")
    h, w = u.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.empty((h, w, 2), dtype="<f4")
    data[:, :, 0] = u
    data[:, :, 1] = v
    with open(path, "wb") as f:
        f.write(FLO_MAGIC)
        f.write(struct.pack("<ii", w, h))
        f.write(data.tobytes())


def make_colorwheel() -> np.ndarray:
    """Build the 55-bin color wheel used for flow rendering, values in [0, 1]."""
    ncols = _RY + _YG + _GC + _CB + _BM + _MR
    wheel = np.zeros((ncols, 3))
    col = 0
    wheel[0:_RY, 0] = 255
    wheel[0:_RY, 1] = np.floor(255 * np.arange(_RY) / _RY)
    col += _RY
    wheel[col:col + _YG, 0] = 255 - np.floor(255 * np.arange(_YG) / _YG)
    wheel[col:col + _YG, 1] = 255
    col += _YG
    wheel[col:col + _GC, 1] = 255
    wheel[col:col + _GC, 2] = np.floor(255 * np.arange(_GC) / _GC)
    col += _GC
    wheel[col:col + _CB, 1] = 255 - np.floor(255 * np.arange(_CB) / _CB)
    wheel[col:col + _CB, 2] = 255
    col += _CB
    wheel[col:col + _BM, 2] = 255
    wheel[col:col + _BM, 0] = np.floor(255 * np.arange(_BM) / _BM)
    col += _BM
    wheel[col:col + _MR, 2] = 255 - np.floor(255 * np.arange(_MR) / _MR)
    wheel[col:col + _MR, 0] = 255
    return wheel / 255.0


_WHEEL = make_colorwheel()


def flow_to_rgb(flow: FlowField, max_mag: float | None = None) -> np.ndarray:
    """Render a flow field as an (H, W, 3) float32 image in [0, 1].

    Hue encodes direction, saturation encodes magnitude. Magnitudes are
    normalized by max_mag when given, otherwise by the field's own maximum
    (floored at 1e-6 so all-zero fields render white rather than dividing
    by zero). Magnitudes beyond max_mag fall back to a dimmed wheel color.
    """
    u = np.asarray(flow.u, dtype=np.float64)
    v = np.asarray(flow.v, dtype=np.float64)
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise ValueError("flow contains non-finite values")
    rad = np.hypot(u, v)
    norm = float(max_mag) if max_mag is not None else float(rad.max())
    norm = max(norm, 1e-6)
    u = u / norm
    v = v / norm
    rad = rad / norm

    ncols = _WHEEL.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = k0 + 1
    k1[k1 == ncols] = 0
    f = fk - k0

    out = np.empty(u.shape + (3,), dtype=np.float64)
    small = rad <= 1.0
    for c in range(3):
        col0 = _WHEEL[k0, c]
        col1 = _WHEEL[k1, c]
        col = (1.0 - f) * col0 + f * col1
        col[small] = 1.0 - rad[small] * (1.0 - col[small])
        col[~small] = col[~small] * 0.75
        out[:, :, c] = col
    return out.astype(np.float32)


def corrupt_flow(flow: FlowField, mode: str, strength: float,
                 rng: np.random.Generator) -> FlowField:
    """Return a corrupted copy of a flow field.

    noise adds Gaussian noise with sigma = strength * max magnitude, so the
    damage scales with the field's own content; zero blanks the field;
    shuffle permutes pixel positions jointly in u and v, preserving the
    value distribution while destroying spatial structure.
    """
    if strength < 0:
        raise ValueError(f"strength must be non-negative, got {strength}")
    u = np.array(flow.u, dtype=np.float32, copy=True)
    v = np.array(flow.v, dtype=np.float32, copy=True)
    if mode == "noise":
        if strength > 0:
            sigma = strength * float(np.hypot(u, v).max())
            if sigma > 0:
                u = u + rng.normal(0.0, sigma, u.shape).astype(np.float32)
                v = v + rng.normal(0.0, sigma, v.shape).astype(np.float32)
    elif mode == "zero":
        u = np.zeros_like(u)
        v = np.zeros_like(v)
    elif mode == "shuffle":
        perm = rng.permutation(u.size)
        u = u.reshape(-1)[perm].reshape(flow.u.shape)
        v = v.reshape(-1)[perm].reshape(flow.v.shape)
    else:
        raise ValueError(f"unknown corruption mode '{mode}', expected one of {CORRUPTION_MODES}")
    return FlowField(u=u, v=v, source_frame=flow.source_frame, target_frame=flow.target_frame)
