"""Shared domain types and the normalized coordinate convention.

All spatial operations work in a resolution-independent frame: a grid of
``rows x cols`` nodes is stretched over the square [-1, 1]^2 so that the
four corner nodes sit exactly on (+-1, +-1).  One warp estimated on a
coarse feature grid can therefore be applied unchanged to a
full-resolution label mask.

Coordinates are (u, v) pairs where u runs along columns and v along rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError

#: Reserved label value marking pixels without a usable label.  It never
#: appears in source ground-truth masks, only in generated pseudo-labels.
IGNORE = 255

#: Maximum per-pixel deviation from sum(p) == 1 tolerated in a probability map.
SIMPLEX_TOLERANCE = 1e-4


@dataclass(frozen=True)
class NormCoord:
    """A continuous point in the normalized [-1, 1]^2 frame.

    Out-of-bounds points are representable; `in_bounds` flags them.
    Boundary points (|u| == 1 or |v| == 1) count as in-bounds.
    """

    u: float
    v: float

    @property
    def in_bounds(self) -> bool:
        return -1.0 <= self.u <= 1.0 and -1.0 <= self.v <= 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=np.float64)


def _check_grid_shape(rows: int, cols: int) -> None:
    if rows < 2 or cols < 2:
        raise DimensionError(f"degenerate grid {rows}x{cols}: need at least 2x2")


def pixel_to_norm(row: int, col: int, rows: int, cols: int) -> NormCoord:
    """Map grid node (row, col) to the normalized frame.

    Corners map exactly onto (+-1, +-1):  u = 2*col/(cols-1) - 1 and
    v = 2*row/(rows-1) - 1.
    """
    _check_grid_shape(rows, cols)
    if not (0 <= row < rows and 0 <= col < cols):
        raise DimensionError(f"node ({row},{col}) outside {rows}x{cols} grid")
    return NormCoord(2.0 * col / (cols - 1) - 1.0, 2.0 * row / (rows - 1) - 1.0)


def norm_to_pixel(coord: NormCoord, rows: int, cols: int) -> tuple[float, float]:
    """Inverse of `pixel_to_norm`; continuous, returns fractional (row, col)."""
    _check_grid_shape(rows, cols)
    row = (coord.v + 1.0) * (rows - 1) / 2.0
    col = (coord.u + 1.0) * (cols - 1) / 2.0
    return row, col


def norm_coord_grid(rows: int, cols: int) -> np.ndarray:
    """(rows*cols, 2) array of (u, v) for every node, row-major."""
    _check_grid_shape(rows, cols)
    u = 2.0 * np.arange(cols, dtype=np.float64) / (cols - 1) - 1.0
    v = 2.0 * np.arange(rows, dtype=np.float64) / (rows - 1) - 1.0
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FeatureGrid:
    """h x w grid of d-dimensional local feature vectors.

    `values` has shape (h, w, d), row-major (row, col, channel); every
    entry must be finite.  Instances are immutable after construction.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise DimensionError(f"feature grid must be 3-d, got shape {vals.shape}")
        h, w, d = vals.shape
        if h < 2 or w < 2 or d < 1:
            raise DimensionError(f"feature grid shape {h}x{w}x{d} too small (need 2x2x1)")
        if not np.all(np.isfinite(vals)):
            raise FormatError("feature grid contains non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LabelMask:
    """H x W categorical part-label map.

    Labels are uint8 values in {0, ..., num_classes-1} plus the reserved
    IGNORE value.  Class 0 is the background part by convention.
    """

    labels: np.ndarray
    num_classes: int
    category: str = ""

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DimensionError(f"label mask must be 2-d, got shape {labels.shape}")
        if labels.dtype != np.uint8:
            if not np.issubdtype(labels.dtype, np.integer):
                raise FormatError("label mask must hold integers")
            if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
                raise FormatError("label values outside byte range")
            labels = labels.astype(np.uint8)
        if not (1 <= self.num_classes <= 255):
            raise FormatError(f"class count {self.num_classes} outside [1, 255]")
        bad = (labels != IGNORE) & (labels >= self.num_classes)
        if bad.any():
            pos = np.argwhere(bad)[0]
            raise FormatError(
                f"label {int(labels[pos[0], pos[1]])} at ({pos[0]},{pos[1]}) "
                f">= class count {self.num_classes}"
            )
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def has_ignore(self) -> bool:
        return bool(np.any(self.labels == IGNORE))


@dataclass(frozen=True)
class ProbabilityMap:
    """H x W x C per-pixel class distribution.

    Every value lies in [0, 1] and each pixel's distribution sums to 1
    within SIMPLEX_TOLERANCE.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise DimensionError(f"probability map must be 3-d, got shape {vals.shape}")
        if vals.shape[2] < 1:
            raise DimensionError("probability map needs at least one class")
        if not np.all(np.isfinite(vals)):
            raise FormatError("probability map contains non-finite values")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise FormatError("probability values outside [0, 1]")
        sums = vals.sum(axis=2)
        err = np.abs(sums - 1.0)
        if err.max() > SIMPLEX_TOLERANCE:
            k, l = np.unravel_index(int(np.argmax(err)), err.shape)
            raise FormatError(
                f"pixel ({k},{l}) distribution sums to {sums[k, l]:.6f}, "
                f"outside 1 +- {SIMPLEX_TOLERANCE}"
            )
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def num_classes(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class CategorySpec:
    """A category's ordered part list; index 0 is always the background."""

    name: str
    parts: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        parts = tuple(self.parts)
        if not parts:
            raise FormatError(f"category '{self.name}' has no parts")
        if len(set(parts)) != len(parts):
            raise FormatError(f"category '{self.name}' has duplicate part names")
        if len(parts) > 255:
            raise FormatError("more than 255 parts not representable in a label mask")
        object.__setattr__(self, "parts", parts)

    @property
    def num_classes(self) -> int:
        return len(self.parts)
