"""Core coordinate conventions and domain type validation."""

from __future__ import annotations

import numpy as np
import pytest

from geomatch import (
    IGNORE,
    CategorySpec,
    DimensionError,
    FeatureGrid,
    FormatError,
    LabelMask,
    NormCoord,
    ProbabilityMap,
    norm_to_pixel,
    pixel_to_norm,
)
from geomatch.types import norm_coord_grid


class TestPixelToNorm:
    def test_corners_of_4x4(self):
        assert pixel_to_norm(0, 0, 4, 4) == NormCoord(-1.0, -1.0)
        assert pixel_to_norm(3, 3, 4, 4) == NormCoord(1.0, 1.0)

    def test_center_of_3x5(self):
        # u = 2*2/4 - 1 = 0, v = 2*1/2 - 1 = 0
        assert pixel_to_norm(1, 2, 3, 5) == NormCoord(0.0, 0.0)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(DimensionError):
            pixel_to_norm(0, 0, 1, 4)
        with pytest.raises(DimensionError):
            pixel_to_norm(0, 0, 4, 1)

    def test_out_of_range_node_rejected(self):
        with pytest.raises(DimensionError):
            pixel_to_norm(4, 0, 4, 4)


class TestNormToPixel:
    def test_corner_inverse(self):
        assert norm_to_pixel(NormCoord(-1.0, -1.0), 4, 4) == (0.0, 0.0)
        assert norm_to_pixel(NormCoord(1.0, 1.0), 2, 2) == (1.0, 1.0)

    def test_center_of_5x3(self):
        # row = (0+1)*4/2 = 2, col = (0+1)*2/2 = 1
        assert norm_to_pixel(NormCoord(0.0, 0.0), 5, 3) == (2.0, 1.0)

    def test_round_trip_on_all_nodes(self):
        for rows, cols in [(2, 2), (3, 5), (7, 4), (16, 16), (31, 9)]:
            for r in range(rows):
                for c in range(cols):
                    p = pixel_to_norm(r, c, rows, cols)
                    rr, cc = norm_to_pixel(p, rows, cols)
                    assert abs(rr - r) < 1e-12
                    assert abs(cc - c) < 1e-12

    def test_degenerate_grid_rejected(self):
        with pytest.raises(DimensionError):
            norm_to_pixel(NormCoord(0.0, 0.0), 1, 5)


class TestNormCoord:
    def test_bounds_flag(self):
        assert NormCoord(1.0, -1.0).in_bounds
        assert NormCoord(0.0, 0.0).in_bounds
        assert not NormCoord(1.0000001, 0.0).in_bounds
        assert not NormCoord(0.0, -2.0).in_bounds

    def test_grid_matches_scalar_map(self):
        pts = norm_coord_grid(3, 5)
        assert pts.shape == (15, 2)
        for idx, (u, v) in enumerate(pts):
            p = pixel_to_norm(idx // 5, idx % 5, 3, 5)
            assert (u, v) == (p.u, p.v)


class TestFeatureGrid:
    def test_valid_construction(self):
        g = FeatureGrid(np.zeros((2, 2, 1)))
        assert (g.h, g.w, g.d) == (2, 2, 1)
        assert not g.values.flags.writeable

    def test_too_small_rejected(self):
        with pytest.raises(DimensionError):
            FeatureGrid(np.zeros((1, 4, 2)))
        with pytest.raises(DimensionError):
            FeatureGrid(np.zeros((4, 4, 0)))

    def test_non_finite_rejected(self):
        bad = np.zeros((3, 3, 2))
        bad[1, 2, 0] = np.nan
        with pytest.raises(FormatError):
            FeatureGrid(bad)
        bad[1, 2, 0] = np.inf
        with pytest.raises(FormatError):
            FeatureGrid(bad)


class TestLabelMask:
    def test_valid_and_ignore(self):
        labels = np.array([[0, 1], [IGNORE, 2]], dtype=np.uint8)
        m = LabelMask(labels, 3)
        assert m.has_ignore
        assert (m.height, m.width) == (2, 2)

    def test_label_at_class_count_rejected(self):
        with pytest.raises(FormatError):
            LabelMask(np.array([[0, 3]], dtype=np.uint8), 3)

    def test_integer_conversion(self):
        m = LabelMask(np.array([[0, 1], [2, 1]], dtype=np.int64), 3)
        assert m.labels.dtype == np.uint8

    def test_negative_rejected(self):
        with pytest.raises(FormatError):
            LabelMask(np.array([[-1, 0]], dtype=np.int64), 3)


class TestProbabilityMap:
    def test_uniform_ok(self):
        p = ProbabilityMap(np.full((2, 2, 4), 0.25))
        assert p.num_classes == 4

    def test_simplex_tolerance(self):
        vals = np.full((1, 1, 2), 0.5)
        ProbabilityMap(vals + 4e-5)  # sums to 1 + 8e-5, inside tolerance
        with pytest.raises(FormatError):
            ProbabilityMap(vals + 9e-5)  # sums to 1 + 1.8e-4, outside

    def test_range_enforced(self):
        vals = np.zeros((1, 1, 2))
        vals[0, 0] = [1.5, -0.5]
        with pytest.raises(FormatError):
            ProbabilityMap(vals)


class TestCategorySpec:
    def test_counts(self):
        spec = CategorySpec("widget", ("background", "a", "b"))
        assert spec.num_classes == 3

    def test_duplicates_rejected(self):
        with pytest.raises(FormatError):
            CategorySpec("widget", ("background", "a", "a"))

    def test_empty_rejected(self):
        with pytest.raises(FormatError):
            CategorySpec("widget", ())
