"""Scaled polynomial bases, L2 projections, and patch fluctuation operators.

Cell bases are monomials in ((x - x_T)/h_T, (y - y_T)/h_T) in graded order,
so the leading (m+1)(m+2)/2 functions of a degree-n basis span exactly the
degree-m subspace for every m <= n.  Cholesky orthonormalization (on by
default from degree 3) is lower-triangular and therefore preserves that
nesting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from . import kernels
from .quadrature import QuadRule


def polynomial_dim(degree: int) -> int:
    """Dimension of bivariate polynomials of total degree <= degree."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree: int) -> np.ndarray:
    """Graded-order exponent pairs: 1, x, y, x^2, xy, y^2, ..."""
    return np.array(
        [(d - j, j) for d in range(degree + 1) for j in range(d + 1)],
        dtype=np.int64,
    ).reshape(-1, 2)


@dataclass(frozen=True)
class CellBasis:
    degree: int
    center: np.ndarray  # (2,)
    scale: float  # cell diameter
    exponents: np.ndarray  # (dim, 2)
    coeffs: np.ndarray | None  # lower-triangular mixing, None = raw monomials
    gram: np.ndarray  # Gram matrix on the cell in this basis

    @property
    def dim(self) -> int:
        return self.exponents.shape[0]


def cell_basis(center, scale, degree, quad: QuadRule, orthonormalize=None) -> CellBasis:
    """Basis on one cell with its Gram matrix from the given rule."""
    if orthonormalize is None:
        orthonormalize = degree >= 3
    center = np.asarray(center, dtype=float)
    expo = monomial_exponents(degree)
    xi = (quad.points[:, 0] - center[0]) / scale
    eta = (quad.points[:, 1] - center[1]) / scale
    vals = kernels.monomial_values(xi, eta, expo)
    gram = kernels.weighted_gram(vals, vals, quad.weights)
    gram = 0.5 * (gram + gram.T)
    coeffs = None
    if orthonormalize:
        lower = cholesky(gram, lower=True)
        coeffs = solve_triangular(lower, np.eye(len(expo)), lower=True)
        gram = np.eye(len(expo))
    return CellBasis(degree, center, float(scale), expo, coeffs, gram)


def cell_basis_values(basis: CellBasis, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    xi = (points[:, 0] - basis.center[0]) / basis.scale
    eta = (points[:, 1] - basis.center[1]) / basis.scale
    vals = kernels.monomial_values(xi, eta, basis.exponents)
    if basis.coeffs is not None:
        vals = vals @ basis.coeffs.T
    return vals


def cell_basis_gradients(basis: CellBasis, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    xi = (points[:, 0] - basis.center[0]) / basis.scale
    eta = (points[:, 1] - basis.center[1]) / basis.scale
    grads = kernels.monomial_gradients(xi, eta, basis.exponents) / basis.scale
    if basis.coeffs is not None:
        grads = np.einsum("pjd,ij->pid", grads, basis.coeffs)
    return grads


@dataclass(frozen=True)
class FaceBasis:
    """1D monomials in the arc parameter s = (x - midpoint) . tangent / h_F."""

    degree: int
    midpoint: np.ndarray
    tangent: np.ndarray
    scale: float  # face length
    gram: np.ndarray

    @property
    def dim(self) -> int:
        return self.degree + 1


def face_basis(midpoint, tangent, scale, degree, quad: QuadRule) -> FaceBasis:
    fb = FaceBasis(
        degree,
        np.asarray(midpoint, dtype=float),
        np.asarray(tangent, dtype=float),
        float(scale),
        np.empty(0),
    )
    vals = face_basis_values(fb, quad.points)
    gram = kernels.weighted_gram(vals, vals, quad.weights)
    object.__setattr__(fb, "gram", 0.5 * (gram + gram.T))
    return fb


def face_basis_values(basis: FaceBasis, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    s = ((points - basis.midpoint[None, :]) @ basis.tangent) / basis.scale
    return s[:, None] ** np.arange(basis.degree + 1)[None, :]


def _project(vals, gram, weights, fvals):
    fvals = np.asarray(fvals, dtype=float)
    moments = vals.T @ (weights * fvals.T if fvals.ndim == 1 else weights[:, None] * fvals)
    if fvals.ndim == 1:
        return np.linalg.solve(gram, moments)
    return np.linalg.solve(gram, moments).T


def l2_project_cell(f, basis: CellBasis, quad: QuadRule) -> np.ndarray:
    """Coefficients of the best L2 fit on the cell.

    f maps an (n, 2) point array to (n,) scalars or (n, 2) vectors; the
    result is (dim,) or (2, dim) accordingly.
    """
    vals = cell_basis_values(basis, quad.points)
    return _project(vals, basis.gram, quad.weights, f(quad.points))


def l2_project_face(f, basis: FaceBasis, quad: QuadRule) -> np.ndarray:
    vals = face_basis_values(basis, quad.points)
    return _project(vals, basis.gram, quad.weights, f(quad.points))


@dataclass(frozen=True)
class PatchFluctuation:
    """Identity minus the patch-wide L2 projection onto degree k-1.

    Degree -1 means the projection space is empty and the operator is the
    identity.  Fields are sampled at the concatenated member-cell quadrature
    points, so applying the operator never needs cell-by-cell bookkeeping.
    """

    patch: int
    degree: int
    points: np.ndarray  # (n, 2) concatenated patch quadrature points
    weights: np.ndarray
    cell_slices: tuple  # per member cell, slice into points
    values: np.ndarray | None  # (n, dim) patch basis values, None if degree < 0
    gram_factor: object  # cho_factor of the patch Gram


def patch_fluctuation(patch_id, degree, cell_rules, center, scale) -> PatchFluctuation:
    points = np.vstack([r.points for r in cell_rules])
    weights = np.concatenate([r.weights for r in cell_rules])
    slices = []
    start = 0
    for r in cell_rules:
        slices.append(slice(start, start + r.n_points))
        start += r.n_points
    if degree < 0:
        return PatchFluctuation(
            patch_id, degree, points, weights, tuple(slices), None, None
        )
    expo = monomial_exponents(degree)
    xi = (points[:, 0] - center[0]) / scale
    eta = (points[:, 1] - center[1]) / scale
    vals = kernels.monomial_values(xi, eta, expo)
    gram = kernels.weighted_gram(vals, vals, weights)
    factor = cho_factor(0.5 * (gram + gram.T))
    return PatchFluctuation(
        patch_id, degree, points, weights, tuple(slices), vals, factor
    )


def patch_project(fluct: PatchFluctuation, samples) -> np.ndarray:
    """Coefficients of the patch projection of point samples (n,) or (n, m)."""
    if fluct.values is None:
        raise ValueError("projection space is empty for degree < 0")
    samples = np.asarray(samples, dtype=float)
    w = fluct.weights
    moments = fluct.values.T @ (w * samples if samples.ndim == 1 else w[:, None] * samples)
    return cho_solve(fluct.gram_factor, moments)


def apply_fluctuation(fluct: PatchFluctuation, samples) -> np.ndarray:
    """Fluctuation of fields sampled at the patch quadrature points."""
    samples = np.asarray(samples, dtype=float)
    if fluct.values is None:
        return samples.copy()
    return samples - fluct.values @ patch_project(fluct, samples)
