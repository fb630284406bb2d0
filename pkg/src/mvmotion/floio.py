"""Middlebury .flo flow file I/O.

Layout: float32 magic 202021.25, int32 width, int32 height, then width*height
interleaved (u, v) float32 pairs in row-major order. Everything is written
little-endian regardless of host byte order. Validity is stored in a sidecar
PNG named <stem>.mask.png (255 = valid); absence means all-valid.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError
from .flow import FlowField

FLO_MAGIC = 202021.25


def mask_path_for(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".mask.png")


def write_flo(path: str | Path, flow: FlowField) -> None:
    path = Path(path)
    h, w = flow.shape
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(data.tobytes())
    Image.fromarray(np.where(flow.valid, 255, 0).astype(np.uint8)).save(mask_path_for(path))


def read_flo(path: str | Path) -> FlowField:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a .flo header")
    magic, w, h = struct.unpack("<fii", raw[:12])
    if abs(magic - FLO_MAGIC) > 1e-3:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if w <= 0 or h <= 0 or len(raw) != 12 + w * h * 8:
        raise FormatError(f"{path}: inconsistent size header ({w}x{h}, {len(raw)} bytes)")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    mask_file = mask_path_for(path)
    if mask_file.exists():
        valid = np.asarray(Image.open(mask_file).convert("L")) > 127
        if valid.shape != (h, w):
            raise FormatError(f"{mask_file}: mask shape {valid.shape} does not match flow {h}x{w}")
    else:
        valid = np.ones((h, w), dtype=bool)
    return FlowField(u=data[..., 0].astype(np.float64), v=data[..., 1].astype(np.float64), valid=valid)
