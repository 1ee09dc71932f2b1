"""Feature-similarity matching score and its gradient.

The score of a warp is the sum, over every target grid position, of the
cosine similarity between the target feature there and the source feature
sampled at the warped coordinate.  Positions whose warped coordinate
falls outside the source frame contribute exactly zero, which penalizes
warps that push correspondences off frame.

Cosine similarity is defined as 0 whenever either vector's norm is at or
below ZERO_NORM_EPS, keeping the sum total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .sampler import bilinear_parts
from .tps import TpsSolved, basis_matrix, control_sites, system_matrix_inverse
from .types import FeatureGrid, norm_coord_grid

ZERO_NORM_EPS = 1e-8


@dataclass(frozen=True)
class SimilarityMap:
    """Per-target-position similarity terms; invalid positions hold exactly 0."""

    values: np.ndarray
    valid_count: int

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|), or 0 if either norm is <= ZERO_NORM_EPS."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vector shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _check_depths(source: FeatureGrid, target: FeatureGrid) -> None:
    if source.d != target.d:
        raise DimensionError(
            f"feature depth mismatch: source d={source.d}, target d={target.d}"
        )


class MatchWorkspace:
    """Precomputed per-(source, target, K, reg) state for repeated scoring.

    Everything that does not depend on the current displacements (target
    lattice coordinates, TPS kernel basis at those coordinates, the system
    inverse, jacobian rows, target feature norms) is computed once, making
    per-candidate score and gradient evaluations cheap inner loops.
    """

    def __init__(self, source: FeatureGrid, target: FeatureGrid, k: int, reg_weight: float = 0.0):
        _check_depths(source, target)
        self.source = source
        self.target = target
        self.k = k
        self.reg_weight = reg_weight
        self.m = k * k
        self.sites = control_sites(k)
        self.system_inverse = system_matrix_inverse(k, reg_weight)
        self.points = norm_coord_grid(target.h, target.w)
        self.basis = basis_matrix(self.sites, self.points)
        # shared per-axis response of warped points to site displacements
        self.jac_rows = self.basis @ self.system_inverse[:, : self.m]
        self.target_flat = target.values.reshape(-1, target.d)
        self.target_norms = np.linalg.norm(self.target_flat, axis=1)
        self._rhs = np.zeros((self.m + 3, 2))

    def _coefficients(self, disp_vec: np.ndarray) -> np.ndarray:
        rhs = self._rhs
        rhs[: self.m, 0] = self.sites[:, 0] + disp_vec[: self.m]
        rhs[: self.m, 1] = self.sites[:, 1] + disp_vec[self.m :]
        return self.system_inverse @ rhs

    def _sample(self, disp_vec: np.ndarray, with_gradient: bool):
        warped = self.basis @ self._coefficients(disp_vec)
        return bilinear_parts(self.source, warped, with_gradient)

    def _similarities(self, svals: np.ndarray, valid: np.ndarray):
        ns = np.linalg.norm(svals, axis=1)
        usable = valid & (ns > ZERO_NORM_EPS) & (self.target_norms > ZERO_NORM_EPS)
        dots = np.einsum("nd,nd->n", svals, self.target_flat)
        sims = np.zeros(len(svals))
        denom = ns[usable] * self.target_norms[usable]
        sims[usable] = np.clip(dots[usable] / denom, -1.0, 1.0)
        return sims, dots, ns, usable

    def score(self, disp_vec: np.ndarray) -> tuple[float, np.ndarray, int]:
        """(phi, per-position similarity (h, w), valid count) at a displacement vector."""
        svals, valid, _, _ = self._sample(disp_vec, with_gradient=False)
        sims, _, _, _ = self._similarities(svals, valid)
        phi = float(np.sum(sims))
        if not np.isfinite(phi):
            raise NumericalError("matching score is non-finite (corrupt input)")
        return phi, sims.reshape(self.target.h, self.target.w), int(np.count_nonzero(valid))

    def gradient(self, disp_vec: np.ndarray) -> np.ndarray:
        """d(phi)/d(displacements) in the flat (all du, all dv) layout."""
        svals, valid, du, dv = self._sample(disp_vec, with_gradient=True)
        sims, dots, ns, usable = self._similarities(svals, valid)

        dphi_df = np.zeros_like(svals)
        inv = 1.0 / (ns[usable] * self.target_norms[usable])
        dphi_df[usable] = (
            self.target_flat[usable] * inv[:, None]
            - svals[usable] * (dots[usable] * inv / np.square(ns[usable]))[:, None]
        )
        g_u = np.einsum("nd,nd->n", dphi_df, du)
        g_v = np.einsum("nd,nd->n", dphi_df, dv)
        grad = np.concatenate([self.jac_rows.T @ g_u, self.jac_rows.T @ g_v])
        if not np.all(np.isfinite(grad)):
            raise NumericalError("matching gradient is non-finite (corrupt input)")
        return grad


def matching_score(
    source: FeatureGrid, target: FeatureGrid, theta: TpsSolved
) -> tuple[float, SimilarityMap]:
    """Total similarity under a solved warp plus the per-position map."""
    ws = MatchWorkspace(source, target, theta.params.k, theta.params.reg_weight)
    phi, sims, valid_count = ws.score(theta.params.to_vector())
    return phi, SimilarityMap(sims, valid_count)


def matching_score_gradient(
    source: FeatureGrid, target: FeatureGrid, theta: TpsSolved
) -> np.ndarray:
    """Analytic d(phi)/d(displacements), zero for off-frame positions."""
    ws = MatchWorkspace(source, target, theta.params.k, theta.params.reg_weight)
    return ws.gradient(theta.params.to_vector())
