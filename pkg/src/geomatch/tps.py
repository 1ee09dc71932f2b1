"""Thin-plate-spline 2-D warps over the normalized frame.

A warp is parameterized by displacements of a fixed regular K x K grid of
control sites spanning [-1, 1]^2.  Zero displacements give the identity
map.  Solving the classic TPS linear system (radial kernel U(r) = r^2
log r^2 plus affine side conditions) yields a map that interpolates the
displaced sites exactly when the bending regularizer is zero, and in the
regularized least-bending sense otherwise.

The solve is linear in the displacements, so the Jacobian of the map with
respect to them is independent of their current values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, NumericalError
from .types import NormCoord

#: Default control grid resolution (5x5 sites, 50 scalar parameters).
DEFAULT_CONTROL_POINTS = 5

#: Max |radial weight orthogonality residual| accepted from the solver.
_SIDE_CONDITION_TOL = 1e-8


def control_sites(k: int) -> np.ndarray:
    """(K*K, 2) regular grid of (u, v) control sites, row-major."""
    if k < 2:
        raise DimensionError(f"control grid needs K >= 2, got {k}")
    ticks = 2.0 * np.arange(k, dtype=np.float64) / (k - 1) - 1.0
    uu, vv = np.meshgrid(ticks, ticks)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


@dataclass(frozen=True)
class TpsParams:
    """Control-point displacements defining a warp.

    `displacements` has shape (K*K, 2) holding (du, dv) per site in
    row-major site order.  `reg_weight` >= 0 trades exact interpolation
    for lower bending energy.
    """

    k: int
    displacements: np.ndarray
    reg_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise DimensionError(f"control grid needs K >= 2, got {self.k}")
        disp = np.asarray(self.displacements, dtype=np.float64)
        if disp.shape != (self.k * self.k, 2):
            raise DimensionError(
                f"displacements shape {disp.shape} != ({self.k * self.k}, 2)"
            )
        if not np.all(np.isfinite(disp)):
            raise FormatError("non-finite control displacements")
        if not (np.isfinite(self.reg_weight) and self.reg_weight >= 0.0):
            raise FormatError(f"regularization weight {self.reg_weight} must be >= 0")
        disp = np.ascontiguousarray(disp)
        disp.setflags(write=False)
        object.__setattr__(self, "displacements", disp)

    @classmethod
    def identity(cls, k: int = DEFAULT_CONTROL_POINTS, reg_weight: float = 0.0) -> "TpsParams":
        return cls(k, np.zeros((k * k, 2)), reg_weight)

    @classmethod
    def from_vector(cls, k: int, vec: np.ndarray, reg_weight: float = 0.0) -> "TpsParams":
        """Build from the flat layout (all du, then all dv)."""
        vec = np.asarray(vec, dtype=np.float64)
        m = k * k
        if vec.shape != (2 * m,):
            raise DimensionError(f"parameter vector shape {vec.shape} != ({2 * m},)")
        return cls(k, np.stack([vec[:m], vec[m:]], axis=1), reg_weight)

    def to_vector(self) -> np.ndarray:
        """Flat layout: all du components, then all dv components."""
        return np.concatenate([self.displacements[:, 0], self.displacements[:, 1]])


def _kernel(r2: np.ndarray) -> np.ndarray:
    """U(r) = r^2 log(r^2) expressed in squared distances, with U(0) = 0."""
    out = np.zeros_like(r2)
    pos = r2 > 0.0
    out[pos] = r2[pos] * np.log(r2[pos])
    return out


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def basis_matrix(sites: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """(n, M+3) evaluation basis: kernel responses then [1, u, v]."""
    pts = np.asarray(pts, dtype=np.float64)
    radial = _kernel(_pairwise_sq_dists(pts, sites))
    poly = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    return np.concatenate([radial, poly], axis=1)


def system_matrix_inverse(k: int, reg_weight: float) -> np.ndarray:
    """Inverse of the bordered TPS system for the regular K x K grid."""
    sites = control_sites(k)
    m = k * k
    phi = _kernel(_pairwise_sq_dists(sites, sites)) + reg_weight * np.eye(m)
    poly = np.column_stack([np.ones(m), sites[:, 0], sites[:, 1]])
    full = np.zeros((m + 3, m + 3))
    full[:m, :m] = phi
    full[:m, m:] = poly
    full[m:, :m] = poly.T
    try:
        inv = np.linalg.inv(full)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular TPS system for K={k}: {exc}") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericalError(f"TPS system inverse for K={k} is non-finite")
    return inv


@dataclass(frozen=True)
class TpsSolved:
    """A solved warp ready for evaluation.

    `coefficients` is (M+3, 2): per output axis, M radial weights followed
    by the affine part [constant, u coefficient, v coefficient].
    `system_inverse` is cached for parameter Jacobians.
    """

    params: TpsParams
    sites: np.ndarray
    coefficients: np.ndarray
    system_inverse: np.ndarray

    @property
    def radial_weights(self) -> np.ndarray:
        """(M, 2) kernel weights per output axis."""
        return self.coefficients[: len(self.sites)]

    @property
    def affine(self) -> np.ndarray:
        """(2, 3) affine part; rows are output axes, columns [1, u, v]."""
        return self.coefficients[len(self.sites):].T


def solve(params: TpsParams) -> TpsSolved:
    """Solve the interpolation system for the displaced control sites."""
    sites = control_sites(params.k)
    m = params.k * params.k
    inv = system_matrix_inverse(params.k, params.reg_weight)
    rhs = np.zeros((m + 3, 2))
    rhs[:m] = sites + params.displacements
    coefs = inv @ rhs
    weights = coefs[:m]
    residual = max(
        float(np.abs(weights.sum(axis=0)).max()),
        float(np.abs(sites.T @ weights).max()),
    )
    if residual > _SIDE_CONDITION_TOL:
        raise NumericalError(
            f"TPS side conditions violated (residual {residual:.3e}) for K={params.k}"
        )
    for arr in (sites, coefs, inv):
        arr.setflags(write=False)
    return TpsSolved(params, sites, coefs, inv)


def transform_points(solved: TpsSolved, pts: np.ndarray) -> np.ndarray:
    """Apply the warp to an (n, 2) array of normalized points."""
    return basis_matrix(solved.sites, np.asarray(pts, dtype=np.float64)) @ solved.coefficients


def tps_map(solved: TpsSolved, p: NormCoord) -> NormCoord:
    """Warp one point.  Total on R^2; the result may be out of bounds."""
    out = transform_points(solved, p.as_array()[None, :])[0]
    return NormCoord(float(out[0]), float(out[1]))


def jacobian_rows(solved: TpsSolved, pts: np.ndarray) -> np.ndarray:
    """(n, M) sensitivity of each warped point to unit site displacements.

    Both output axes share the same row: moving site m by (du, dv) moves
    the warped point by (h_m * du, h_m * dv) where h_m is the returned
    entry.  Independent of the current displacement values.
    """
    m = len(solved.sites)
    basis = basis_matrix(solved.sites, np.asarray(pts, dtype=np.float64))
    return basis @ solved.system_inverse[:, :m]


def tps_jacobian_wrt_params(solved: TpsSolved, p: NormCoord) -> np.ndarray:
    """(2, 2M) Jacobian of the warped point w.r.t. the flat parameter layout."""
    h = jacobian_rows(solved, p.as_array()[None, :])[0]
    m = len(h)
    jac = np.zeros((2, 2 * m))
    jac[0, :m] = h
    jac[1, m:] = h
    return jac
