"""Deterministic descriptor grids for self-contained runs.

Each cell of the output grid gets an unsigned gradient-orientation
histogram concatenated with the cell's mean RGB, L2-normalized.  The
extractor exists so the matching pipeline can be exercised end to end
without any external model weights; grids produced by a CNN exporter can
be ingested through the same file format and validated here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .types import FeatureGrid

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class DescriptorConfig:
    cell_size: int = 16
    bins: int = 8
    magnitude_floor: float = 1e-6
    norm_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.cell_size < 2:
            raise FormatError(f"cell size must be >= 2, got {self.cell_size}")
        if self.bins < 2:
            raise FormatError(f"orientation bins must be >= 2, got {self.bins}")

    @property
    def depth(self) -> int:
        return self.bins + 3


def _as_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected HxWx3 RGB raster, got shape {image.shape}")
    return image.astype(np.float64) / 255.0


def extract_descriptors(image: np.ndarray, config: DescriptorConfig | None = None) -> FeatureGrid:
    """Histogram+color descriptor grid of an RGB raster.

    The grid has floor(H/s) x floor(W/s) cells; trailing pixels that do
    not fill a cell are dropped.  Fully deterministic: identical images
    produce bit-identical grids.
    """
    config = config or DescriptorConfig()
    rgb = _as_rgb(image)
    height, width = rgb.shape[:2]
    s = config.cell_size
    if height < 2 * s or width < 2 * s:
        raise DimensionError(
            f"image {height}x{width} smaller than two {s}-pixel cells per axis"
        )
    rows, cols = height // s, width // s

    gray = rgb @ np.array(_LUMA)
    gy, gx = np.gradient(gray)
    magnitude = np.hypot(gx, gy)

    # canonicalize to the upper half-plane so opposite gradients share a bin
    flip = (gy < 0.0) | ((gy == 0.0) & (gx < 0.0))
    cx = np.where(flip, -gx, gx)
    cy = np.where(flip, -gy, gy)
    orientation = np.arctan2(cy, cx)
    bins = np.minimum((orientation / np.pi * config.bins).astype(np.int64), config.bins - 1)
    bins = np.maximum(bins, 0)

    crop_m = magnitude[: rows * s, : cols * s]
    crop_b = bins[: rows * s, : cols * s]
    cell_i = np.repeat(np.arange(rows), s)[:, None]
    cell_j = np.repeat(np.arange(cols), s)[None, :]
    flat_idx = ((cell_i * cols + cell_j) * config.bins + crop_b).ravel()
    keep = (crop_m >= config.magnitude_floor).ravel()
    hist = np.bincount(
        flat_idx[keep], weights=crop_m.ravel()[keep], minlength=rows * cols * config.bins
    ).reshape(rows, cols, config.bins)

    color = rgb[: rows * s, : cols * s].reshape(rows, s, cols, s, 3).mean(axis=(1, 3))

    desc = np.concatenate([hist, color], axis=2)
    norms = np.linalg.norm(desc, axis=2)
    scale = np.where(norms > config.norm_epsilon, norms, 1.0)
    desc = np.where((norms > config.norm_epsilon)[:, :, None], desc / scale[:, :, None], 0.0)
    return FeatureGrid(desc)


@dataclass(frozen=True)
class GridReport:
    """Diagnostics from `validate_feature_grid`."""

    finite: bool
    first_nonfinite: tuple[int, int, int] | None
    channel_mean: np.ndarray
    channel_std: np.ndarray
    near_zero_fraction: float
    flagged: bool


def validate_feature_grid(grid: FeatureGrid | np.ndarray) -> GridReport:
    """Diagnostic pass over a grid; never raises.

    Flags grids where more than half of the vectors are near zero, and
    reports the position of the first non-finite entry if any.
    """
    values = grid.values if isinstance(grid, FeatureGrid) else np.asarray(grid, dtype=np.float64)
    finite_mask = np.isfinite(values)
    finite = bool(finite_mask.all())
    first_nonfinite = None
    if not finite:
        pos = np.argwhere(~finite_mask)[0]
        first_nonfinite = (int(pos[0]), int(pos[1]), int(pos[2]))
    safe = np.where(finite_mask, values, 0.0)
    norms = np.linalg.norm(safe, axis=2)
    near_zero = float(np.count_nonzero(norms < 1e-8)) / norms.size
    return GridReport(
        finite=finite,
        first_nonfinite=first_nonfinite,
        channel_mean=safe.mean(axis=(0, 1)),
        channel_std=safe.std(axis=(0, 1)),
        near_zero_fraction=near_zero,
        flagged=near_zero > 0.5 or not finite,
    )
