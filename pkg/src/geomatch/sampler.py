"""Sampling grids at continuous normalized coordinates.

Feature grids are sampled bilinearly (differentiable, with the analytic
gradient returned alongside the value); label masks are sampled nearest
neighbor.  Queries outside [-1, 1]^2 yield a zero feature vector / the
IGNORE label rather than clamping to the border, so downstream sums can
treat off-frame correspondences as contributing nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import IGNORE, FeatureGrid, LabelMask, NormCoord

#: Slack on the in-bounds test.  Boundary points count as in-bounds, and
#: warped coordinates come out of a numerically solved linear system, so
#: an exact |u| <= 1 test would drop border pixels at random under the
#: identity warp.
BOUNDS_EPS = 1e-9


@dataclass(frozen=True)
class SampleResult:
    """One feature sample: value (d,), validity, and d(value)/d(u,v) as (d, 2)."""

    value: np.ndarray
    valid: bool
    gradient: np.ndarray


def _to_pixel_coords(pts: np.ndarray, rows: int, cols: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = pts[:, 0]
    v = pts[:, 1]
    lim = 1.0 + BOUNDS_EPS
    valid = (u >= -lim) & (u <= lim) & (v >= -lim) & (v <= lim)
    col = (u + 1.0) * (cols - 1) / 2.0
    row = (v + 1.0) * (rows - 1) / 2.0
    return row, col, valid


def bilinear_parts(
    grid: FeatureGrid, pts: np.ndarray, with_gradient: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Bilinear values plus separate du/dv derivative arrays.

    Returns (values (n, d), valid (n,), d/du (n, d), d/dv (n, d)); the
    derivative arrays are None when with_gradient is False.  Invalid rows
    are zero in every output.  At a cell boundary the derivatives are
    those of the cell to the right/below (left/above on the outer edge).
    """
    pts = np.asarray(pts, dtype=np.float64)
    h, w, d = grid.values.shape
    row, col, valid = _to_pixel_coords(pts, h, w)

    # Clamp so out-of-bounds rows index safely; they are zeroed afterwards.
    row = np.clip(row, 0.0, h - 1.0)
    col = np.clip(col, 0.0, w - 1.0)
    r0 = np.minimum(row.astype(np.int64), h - 2)
    c0 = np.minimum(col.astype(np.int64), w - 2)
    fr = row - r0
    fc = col - c0
    omr = 1.0 - fr
    omc = 1.0 - fc

    flat = grid.values.reshape(-1, d)
    base = r0 * w + c0
    corners = flat[np.stack([base, base + 1, base + w, base + w + 1], axis=1)]

    weights = np.stack([omr * omc, omr * fc, fr * omc, fr * fc], axis=1)
    values = np.einsum("nf,nfd->nd", weights, corners)
    values[~valid] = 0.0
    if not with_gradient:
        return values, valid, None, None

    w_dc = np.stack([-omr, omr, -fr, fr], axis=1)
    w_dr = np.stack([-omc, -fc, omc, fc], axis=1)
    du = np.einsum("nf,nfd->nd", w_dc, corners) * ((w - 1) / 2.0)
    dv = np.einsum("nf,nfd->nd", w_dr, corners) * ((h - 1) / 2.0)
    du[~valid] = 0.0
    dv[~valid] = 0.0
    return values, valid, du, dv


def sample_features_batch(
    grid: FeatureGrid, pts: np.ndarray, with_gradient: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Bilinear sampling of (n, 2) normalized points.

    Returns (values (n, d), valid (n,), gradients (n, d, 2) or None).
    Invalid rows are zero-filled, including their gradients.
    """
    values, valid, du, dv = bilinear_parts(grid, pts, with_gradient)
    if not with_gradient:
        return values, valid, None
    return values, valid, np.stack([du, dv], axis=2)


def sample_features(grid: FeatureGrid, p: NormCoord) -> SampleResult:
    """Sample one point; exact at grid nodes, zero vector out of bounds."""
    values, valid, gradients = sample_features_batch(grid, p.as_array()[None, :])
    return SampleResult(values[0], bool(valid[0]), gradients[0])


def sample_labels_batch(mask: LabelMask, pts: np.ndarray) -> np.ndarray:
    """Nearest-neighbor labels for (n, 2) normalized points.

    Ties between two pixel centers resolve toward the smaller row, then
    the smaller column.  Out-of-bounds points get IGNORE.
    """
    pts = np.asarray(pts, dtype=np.float64)
    h, w = mask.labels.shape
    row, col, valid = _to_pixel_coords(pts, h, w)
    # round-half-down realizes the tie-break toward smaller indices
    r = np.clip(np.ceil(row - 0.5).astype(np.int64), 0, h - 1)
    c = np.clip(np.ceil(col - 0.5).astype(np.int64), 0, w - 1)
    out = mask.labels[r, c].copy()
    out[~valid] = IGNORE
    return out


def sample_label(mask: LabelMask, p: NormCoord) -> int:
    return int(sample_labels_batch(mask, p.as_array()[None, :])[0])
