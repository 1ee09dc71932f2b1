"""Raster I/O and label visualization.

Images are 8-bit RGB, read from and written to PNG or PPM (P6).  Label
masks are colorized with a fixed 256-entry palette keyed by label index;
the IGNORE slot is light yellow so uncertain pixels stand out in
overlays.
"""

from __future__ import annotations

import colorsys
import io
import os
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, FormatError, MissingArtifactError
from .types import IGNORE

IGNORE_COLOR = (255, 255, 170)
OVERLAY_ALPHA = 0.5


def read_image(path: Path | str) -> np.ndarray:
    """Load an image as (H, W, 3) uint8 RGB."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc


def write_image(path: Path | str, pixels: np.ndarray) -> None:
    """Write (H, W, 3) uint8 RGB as PNG or PPM, decided by extension."""
    path = Path(path)
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise DimensionError(f"expected HxWx3 uint8 pixels, got {pixels.shape} {pixels.dtype}")
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        fmt = "PPM"
    elif suffix == ".png":
        fmt = "PNG"
    else:
        raise FormatError(f"unsupported image extension '{suffix}' (use .png or .ppm)")
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format=fmt)
    payload = buf.getvalue()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@lru_cache(maxsize=1)
def label_palette() -> np.ndarray:
    """(256, 3) uint8 palette: black background, golden-angle hues for
    parts, light yellow for IGNORE."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for i in range(1, 255):
        hue = (i * 0.61803398875) % 1.0
        sat = 0.55 + 0.35 * ((i * 7) % 3) / 2.0
        val = 0.95 if i % 2 else 0.75
        r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
        palette[i] = (round(r * 255), round(g * 255), round(b * 255))
    palette[IGNORE] = IGNORE_COLOR
    return palette


def colorize_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionError(f"label array must be 2-d, got shape {labels.shape}")
    return label_palette()[labels.astype(np.uint8)]


def overlay_labels(image: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Blend the colorized mask over the image at 50% alpha."""
    image = np.asarray(image)
    labels = np.asarray(labels)
    if image.shape[:2] != labels.shape:
        raise DimensionError(
            f"overlay size mismatch: image {image.shape[:2]} vs mask {labels.shape}"
        )
    color = colorize_labels(labels).astype(np.float64)
    blended = (1.0 - OVERLAY_ALPHA) * image.astype(np.float64) + OVERLAY_ALPHA * color
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)
