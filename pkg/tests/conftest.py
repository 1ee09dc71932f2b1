"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from geomatch import FeatureGrid
from geomatch.tps import control_sites, solve, transform_points, TpsParams
from geomatch.sampler import sample_features_batch
from geomatch.types import norm_coord_grid


def smooth_feature_grid(h: int, w: int, d: int, rng: np.random.Generator, fmax: float = 1.3) -> FeatureGrid:
    """Low-frequency sinusoidal fields; bilinear kinks stay mild."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    vals = np.zeros((h, w, d))
    for c in range(d):
        fa, fb = rng.uniform(0.5, fmax, 2)
        pa, pb = rng.uniform(0, 2 * np.pi, 2)
        vals[:, :, c] = np.sin(2 * np.pi * fa * xx + pa) + np.cos(2 * np.pi * fb * yy + pb) + 2.5
    return FeatureGrid(vals)


def unit_feature_grid(h: int, w: int, d: int, rng: np.random.Generator) -> FeatureGrid:
    """Random per-node unit vectors (distinct with probability 1)."""
    vals = rng.normal(size=(h, w, d))
    vals /= np.linalg.norm(vals, axis=2, keepdims=True)
    return FeatureGrid(vals)


def procedural_image(size: int, rng: np.random.Generator, fmax: float = 2.0) -> np.ndarray:
    """Smooth multi-frequency RGB texture as uint8."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size, 3))
    for c in range(3):
        f1, f2 = rng.uniform(0.8, fmax, 2)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        ang = rng.uniform(0, np.pi)
        r = xx * np.cos(ang) + yy * np.sin(ang)
        img[:, :, c] = (
            0.5
            + 0.25 * np.sin(2 * np.pi * f1 * r / size + p1)
            + 0.25 * np.cos(2 * np.pi * f2 * yy / size + p2)
        )
    return (np.clip(img, 0, 1) * 255).astype(np.uint8)


def shrinking_warp(k: int, rng: np.random.Generator, expand: float = 0.08, jitter: float = 0.07) -> TpsParams:
    """Mild random warp composed with an expansion, so the warped frame
    border lands outside the source frame and stays off any validity
    cliff.  Total displacement magnitude <= expand + jitter."""
    sites = control_sites(k)
    disp = expand * sites + rng.uniform(-jitter, jitter, (k * k, 2))
    return TpsParams(k, disp)


def warp_grid_through(source: FeatureGrid, params: TpsParams, h: int, w: int):
    """Target grid built by sampling the source at warped lattice points.

    Returns (target grid, number of in-bounds lattice points).
    """
    pts = transform_points(solve(params), norm_coord_grid(h, w))
    values, valid, _ = sample_features_batch(source, pts, with_gradient=False)
    return FeatureGrid(values.reshape(h, w, source.d)), int(valid.sum())


def kink_safe_params(
    source: FeatureGrid,
    target_shape: tuple[int, int],
    k: int,
    rng: np.random.Generator,
    max_disp: float = 0.2,
    margin: float = 3e-3,
    attempts: int = 500,
) -> TpsParams:
    """Draw warp parameters whose warped lattice points all stay at least
    `margin` (in cell-fraction units) away from bilinear kinks, so central
    finite differences see a smooth score.  A 1e-4 difference step moves a
    warped point by well under 1e-3 pixels, so the margin has slack."""
    h, w = target_shape
    pts = norm_coord_grid(h, w)
    for _ in range(attempts):
        params = TpsParams(k, rng.uniform(-max_disp, max_disp, (k * k, 2)))
        warped = transform_points(solve(params), pts)
        col = (warped[:, 0] + 1.0) * (source.w - 1) / 2.0
        row = (warped[:, 1] + 1.0) * (source.h - 1) / 2.0
        inb = (np.abs(warped[:, 0]) <= 1.0) & (np.abs(warped[:, 1]) <= 1.0)
        # also keep clear of the frame edge, where validity flips
        edge = np.minimum.reduce(
            [np.abs(warped[:, 0] - 1), np.abs(warped[:, 0] + 1),
             np.abs(warped[:, 1] - 1), np.abs(warped[:, 1] + 1)]
        )
        frac_c = np.abs(col - np.round(col))
        frac_r = np.abs(row - np.round(row))
        clear = np.minimum(frac_c, frac_r)
        if inb.any() and clear[inb].min() > margin and edge.min() > margin:
            return params
    raise AssertionError("could not draw kink-safe warp parameters")
