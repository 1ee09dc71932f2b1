"""Writers for the pipeline's binary file formats.

The exporter talks to the matching pipeline only through files, so the
two layouts it emits are spelled out here rather than imported:

  FGRD  magic "FGRD", u16 version=1, u32 h, u32 w, u32 d,
        h*w*d little-endian float32, row-major (row, col, channel)
  PMAP  magic "PMAP", u16 version=1, u32 H, u32 W, u16 C,
        H*W*C little-endian float32, per-pixel sums within 1e-4 of 1
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ExportError

_VERSION = 1


def _atomic_write(path: Path | str, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _f32_bytes(values: np.ndarray, what: str) -> bytes:
    out = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(out)):
        raise ExportError(f"{what}: non-finite values after float32 conversion")
    return out.tobytes()


def write_feature_grid(path: Path | str, values: np.ndarray) -> None:
    """Write an (h, w, d) array as an FGRD file."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise ExportError(f"feature grid must be 3-d, got shape {values.shape}")
    h, w, d = values.shape
    if h < 2 or w < 2 or d < 1:
        raise ExportError(f"feature grid {h}x{w}x{d} below the 2x2x1 minimum")
    header = b"FGRD" + struct.pack("<HIII", _VERSION, h, w, d)
    _atomic_write(path, header + _f32_bytes(values, "feature grid"))


def write_probability_map(path: Path | str, values: np.ndarray) -> None:
    """Write an (H, W, C) per-pixel distribution as a PMAP file."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ExportError(f"probability map must be 3-d, got shape {values.shape}")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ExportError("probability values outside [0, 1]")
    sums = values.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-4:
        raise ExportError("per-pixel probabilities do not sum to 1 within 1e-4")
    h, w, c = values.shape
    header = b"PMAP" + struct.pack("<HIIH", _VERSION, h, w, c)
    _atomic_write(path, header + _f32_bytes(values, "probability map"))
