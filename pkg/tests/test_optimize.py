"""Warp optimization: monotone ascent, recovery, and the FD oracle."""

from __future__ import annotations

import numpy as np
import pytest

from geomatch import (
    FeatureGrid,
    FormatError,
    OptimConfig,
    TpsParams,
    finite_diff_gradient,
    matching_score,
    matching_score_gradient,
    optimize_transform,
    solve,
)

from conftest import (
    kink_safe_params,
    procedural_image,
    shrinking_warp,
    smooth_feature_grid,
    unit_feature_grid,
    warp_grid_through,
)
from geomatch.features import extract_descriptors


class TestOptimizeTransform:
    def test_self_match_returns_identity(self):
        rng = np.random.default_rng(4)
        grid = unit_feature_grid(8, 8, 4, rng)
        res = optimize_transform(grid, grid)
        assert abs(res.phi - 64.0) < 1e-6
        assert np.abs(res.theta_hat.displacements).max() < 1e-6
        assert res.converged

    def test_constant_grids_converge_at_identity_quickly(self):
        const = FeatureGrid(np.full((6, 6, 3), 2.0))
        res = optimize_transform(const, const)
        assert res.converged
        assert res.iterations <= 11
        assert np.all(res.theta_hat.displacements == 0.0)

    def test_warp_recovery(self):
        rng = np.random.default_rng(15)
        src = extract_descriptors(procedural_image(512, rng))
        params_star = shrinking_warp(5, rng)
        target, valid_count = warp_grid_through(src, params_star, 32, 32)
        res = optimize_transform(src, target)
        assert res.phi >= 0.99 * valid_count

    def test_phi_never_below_identity_score(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            src = smooth_feature_grid(7, 9, 3, rng)
            tgt = smooth_feature_grid(7, 9, 3, rng)
            res = optimize_transform(src, tgt)
            identity_phi, _ = matching_score(src, tgt, solve(TpsParams.identity(5)))
            assert res.phi >= identity_phi - 1e-12

    def test_phi_matches_recomputed_score(self):
        rng = np.random.default_rng(9)
        src = smooth_feature_grid(8, 8, 3, rng)
        tgt = smooth_feature_grid(8, 8, 3, rng)
        res = optimize_transform(src, tgt)
        phi, _ = matching_score(src, tgt, solve(res.theta_hat))
        assert abs(res.phi - phi) < 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        src = smooth_feature_grid(9, 7, 4, rng)
        tgt = smooth_feature_grid(9, 7, 4, rng)
        r1 = optimize_transform(src, tgt)
        r2 = optimize_transform(src, tgt)
        assert r1.phi == r2.phi
        assert r1.iterations == r2.iterations
        assert np.array_equal(r1.theta_hat.displacements, r2.theta_hat.displacements)

    def test_clamp_respected(self):
        rng = np.random.default_rng(12)
        src = smooth_feature_grid(10, 10, 3, rng)
        tgt, _ = warp_grid_through(src, shrinking_warp(5, rng), 10, 10)
        config = OptimConfig(clamp=0.03)
        res = optimize_transform(src, tgt, config)
        assert np.abs(res.theta_hat.displacements).max() <= 0.03

    def test_depth_mismatch_rejected(self):
        from geomatch import DimensionError

        with pytest.raises(DimensionError):
            optimize_transform(
                FeatureGrid(np.ones((4, 4, 2))), FeatureGrid(np.ones((4, 4, 3)))
            )

    def test_bad_config_rejected(self):
        with pytest.raises(FormatError):
            OptimConfig(max_iters=0)
        with pytest.raises(FormatError):
            OptimConfig(step_size=-0.1)
        with pytest.raises(FormatError):
            OptimConfig(reg_weight=-1.0)


class TestFiniteDiffGradient:
    def test_constant_grids_zero(self):
        # evaluated at a mild contraction so no lattice point sits exactly on
        # the frame edge, where the validity indicator (not phi) would jump
        from geomatch.tps import control_sites

        const = FeatureGrid(np.full((5, 5, 2), 1.0))
        params = TpsParams(3, -0.05 * control_sites(3))
        grad = finite_diff_gradient(const, const, params, step=1e-3)
        assert np.all(grad == 0.0)

    def test_agrees_with_analytic(self):
        rng = np.random.default_rng(20)
        src = smooth_feature_grid(9, 9, 3, rng)
        tgt = smooth_feature_grid(9, 9, 3, rng)
        params = kink_safe_params(src, (9, 9), 3, rng)
        analytic = matching_score_gradient(src, tgt, solve(params))
        numeric = finite_diff_gradient(src, tgt, params, step=1e-4)
        errs = np.abs(analytic - numeric)
        big = np.abs(numeric) >= 1e-3
        assert (errs[big] / np.abs(numeric[big])).max() < 1e-3

    def test_richardson_step_refinement(self):
        # halving the step shrinks the FD-vs-analytic gap (or leaves it at
        # the noise floor) for a kink-free draw
        rng = np.random.default_rng(25)
        src = smooth_feature_grid(8, 8, 3, rng)
        tgt = smooth_feature_grid(8, 8, 3, rng)
        params = kink_safe_params(src, (8, 8), 3, rng, margin=1e-2)
        analytic = matching_score_gradient(src, tgt, solve(params))
        coarse = np.abs(finite_diff_gradient(src, tgt, params, step=1e-3) - analytic).max()
        fine = np.abs(finite_diff_gradient(src, tgt, params, step=5e-4) - analytic).max()
        assert fine <= coarse + 1e-8

    def test_bad_step_rejected(self):
        grid = FeatureGrid(np.ones((4, 4, 2)))
        with pytest.raises(FormatError):
            finite_diff_gradient(grid, grid, TpsParams.identity(3), step=0.0)
