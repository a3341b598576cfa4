"""Local blocks of the stabilised Oseen scheme.

Matrix convention: `block[i, j]` is the form evaluated with trial function j
and test function i.  Scalar building blocks act on one velocity component
and are scattered to both through the `ix` / `iy` maps of the cell packs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .basis import PatchFluctuation
from .meshing import MacroDecomposition, PolytopalMesh
from .operators import CellOperatorPack, advection_map


@dataclass(frozen=True)
class OseenCoefficients:
    """Problem data for -eps*Lap(u) + (b.grad)u + sigma*u + grad p = f."""

    epsilon: float
    sigma: float = 0.0
    b: Callable | None = None  # (n, 2) points -> (n, 2) values
    b_grad: Callable | None = None  # (n, 2) points -> (n, 2, 2) Jacobians
    f: Callable | None = None
    dirichlet: Callable | None = None  # boundary velocity, None = homogeneous

    def b_values(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.b is None:
            return np.zeros_like(points)
        return np.asarray(self.b(points), dtype=float)

    def f_values(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.f is None:
            return np.zeros_like(points)
        return np.asarray(self.f(points), dtype=float)


@dataclass(frozen=True)
class StabilisationParams:
    """Per-patch stabilisation weights and the advection regime indicator."""

    c_tau: float
    c_rho: float
    eps_guard: float
    h: np.ndarray  # patch diameters
    b_sup: np.ndarray  # sup of |b| over each patch
    b_mean: np.ndarray  # (n_patches, 2) plain average of b over patch points
    tau: np.ndarray
    rho: np.ndarray
    gamma: np.ndarray
    omega: float


def _jacobian_sup(coeffs: OseenCoefficients, points: np.ndarray, step: float) -> float:
    if coeffs.b is None:
        return 0.0
    if coeffs.b_grad is not None:
        jac = np.asarray(coeffs.b_grad(points), dtype=float)
        return float(np.max(np.abs(jac))) if jac.size else 0.0
    sup = 0.0
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = step
        diff = (coeffs.b_values(points + shift) - coeffs.b_values(points - shift)) / (2 * step)
        if diff.size:
            sup = max(sup, float(np.max(np.abs(diff))))
    return sup


def build_params(
    mesh: PolytopalMesh,
    macro: MacroDecomposition,
    packs,
    coeffs: OseenCoefficients,
    c_tau: float = 1.0,
    c_rho: float = 1.0,
    eps_guard: float = 1e-12,
) -> StabilisationParams:
    """Patchwise LPS weights tau, rho, the scaling gamma, and global omega.

    tau_M = c_tau * h_M / max(sup|b|, guard), rho_M = c_rho * h_M,
    gamma_M = h_M^2 / (eps + (1 + sup|b|) h_M + sigma h_M^2), and omega
    measures the variation of b relative to the diffusive scales.
    """
    n_patches = len(macro.patches)
    h = macro.patch_diameters.astype(float)
    b_sup = np.zeros(n_patches)
    b_mean = np.zeros((n_patches, 2))
    omega = 0.0
    for m, cells in enumerate(macro.patches):
        points = np.concatenate([packs[c].quad.points for c in cells])
        bvals = coeffs.b_values(points)
        if bvals.size:
            b_sup[m] = float(np.max(np.hypot(bvals[:, 0], bvals[:, 1])))
            b_mean[m] = bvals.mean(axis=0)
        jac_sup = _jacobian_sup(coeffs, points, 1e-6 * h[m])
        omega = max(omega, h[m] ** 2 * jac_sup / (coeffs.epsilon + coeffs.sigma * h[m] ** 2))
    tau = c_tau * h / np.maximum(b_sup, eps_guard)
    rho = c_rho * h
    gamma = h**2 / (coeffs.epsilon + (1.0 + b_sup) * h + coeffs.sigma * h**2)
    return StabilisationParams(
        c_tau=c_tau,
        c_rho=c_rho,
        eps_guard=eps_guard,
        h=h,
        b_sup=b_sup,
        b_mean=b_mean,
        tau=tau,
        rho=rho,
        gamma=gamma,
        omega=float(omega),
    )


def scatter_components(scalar_block: np.ndarray, pack: CellOperatorPack) -> np.ndarray:
    out = np.zeros((pack.n_loc, pack.n_loc))
    out[np.ix_(pack.ix, pack.ix)] = scalar_block
    out[np.ix_(pack.iy, pack.iy)] = scalar_block
    return out


def face_jump_eval(pack: CellOperatorPack, e: int) -> np.ndarray:
    """Point values of v_F - v_T at the quadrature nodes of local face e."""
    pf = pack.faces[e]
    mat = np.zeros((pf.rule.n_points, pack.ns))
    mat[:, pack.face_cols[e]] = pf.fvals
    mat[:, : pack.nk] -= pf.cvals[:, : pack.nk]
    return mat


def viscous_stabilisation(pack: CellOperatorPack) -> np.ndarray:
    """Scalar matrix of the reconstruction-corrected face penalty (unit eps)."""
    nk, nk1 = pack.nk, pack.nk1
    # coefficients of r(v) - pi_T^k r(v) in the degree-(k+1) cell basis
    dmat = pack.recon.copy()
    dmat[:nk, :] -= pack.proj_k1_to_k @ pack.recon
    out = np.zeros((pack.ns, pack.ns))
    for e, pf in enumerate(pack.faces):
        wf = pf.rule.weights
        trace_proj = cho_solve(pf.gram_cho, pf.fvals.T @ (wf[:, None] * pf.cvals))
        jump = -trace_proj @ dmat
        jump[:, : nk] -= trace_proj[:, :nk]
        jump[:, pack.face_cols[e]] += np.eye(pack.fk)
        out += (1.0 / pack.diameter) * jump.T @ pf.basis.gram @ jump
    return out


def local_viscous_block(pack: CellOperatorPack, epsilon: float) -> np.ndarray:
    """eps * (reconstruction stiffness + face stabilisation), both components."""
    scalar = pack.recon.T @ pack.stiff1 @ pack.recon + viscous_stabilisation(pack)
    return epsilon * scatter_components(scalar, pack)


def local_convection_block(pack: CellOperatorPack, sigma: float) -> np.ndarray:
    """Advective-reactive block: trial paired against the advection of the test.

    Rows are test dofs, so the advection reconstruction lands on the row index
    while the upwind face correction and the reaction term are symmetric.
    """
    nk = pack.nk
    adv_mom = pack.mass1[:nk, :nk] @ pack.adv_coeff
    scalar = np.zeros((pack.ns, pack.ns))
    scalar[:, :nk] = -adv_mom.T
    for e, pf in enumerate(pack.faces):
        b_minus = 0.5 * (np.abs(pf.bn) - pf.bn)
        jump = face_jump_eval(pack, e)
        scalar += jump.T @ ((pf.rule.weights * b_minus)[:, None] * jump)
    scalar[:nk, :nk] += sigma * pack.mass1[:nk, :nk]
    return scatter_components(scalar, pack)


def local_pressure_coupling(pack: CellOperatorPack) -> np.ndarray:
    """Moments (D_T v, q)_T as a (pressure, velocity) matrix.

    The assembler places this block with opposite signs in the two
    off-diagonal positions of the saddle system.
    """
    return pack.div_mom


def normal_jump_block(pack: CellOperatorPack) -> np.ndarray:
    """Penalty on the normal component of v_T - v_F over every face."""
    out = np.zeros((pack.n_loc, pack.n_loc))
    for e, pf in enumerate(pack.faces):
        jump = face_jump_eval(pack, e)
        njump = np.zeros((pf.rule.n_points, pack.n_loc))
        njump[:, pack.ix] = pf.normal[0] * jump
        njump[:, pack.iy] = pf.normal[1] * jump
        out += njump.T @ (pf.rule.weights[:, None] * njump)
    return out


def _patch_component_maps(packs):
    offsets = np.cumsum([0] + [p.n_loc for p in packs])
    ix = np.concatenate([off + p.ix for off, p in zip(offsets, packs)])
    iy = np.concatenate([off + p.iy for off, p in zip(offsets, packs)])
    return offsets, ix, iy


def _fluctuation_gram(point_maps, fluct: PatchFluctuation) -> np.ndarray:
    """Gram of the fluctuation K applied to broken fields given pointwise.

    `point_maps` sends stacked scalar dofs to values at the patch quadrature
    nodes; the projection part is subtracted through the patch Gram factor.
    """
    weighted = fluct.weights[:, None] * point_maps
    term = point_maps.T @ weighted
    if fluct.values is not None:
        mom = fluct.values.T @ weighted
        term -= mom.T @ cho_solve(fluct.gram_factor, mom)
    return term


def lps_block(packs, tau: float, b_patch, fluct: PatchFluctuation) -> np.ndarray:
    """tau * (K G_b v, K G_b w)_M over the concatenated blocks of a patch.

    The advection reconstruction uses the patch average `b_patch` in its
    volume term and the exact field in the face fluxes.
    """
    offsets, ix, iy = _patch_component_maps(packs)
    n_pts = fluct.points.shape[0]
    ns_total = sum(p.ns for p in packs)
    point_maps = np.zeros((n_pts, ns_total))
    col = 0
    for pack, rows in zip(packs, fluct.cell_slices):
        amap = advection_map(pack, b_patch)
        point_maps[rows, col : col + pack.ns] = pack.vals[:, : pack.nk] @ amap
        col += pack.ns
    scalar = tau * _fluctuation_gram(point_maps, fluct)
    n_total = offsets[-1]
    out = np.zeros((n_total, n_total))
    out[np.ix_(ix, ix)] = scalar
    out[np.ix_(iy, iy)] = scalar
    return out


def pressure_gradient_block(packs, rho: float, fluct: PatchFluctuation) -> np.ndarray:
    """rho * (K grad q, K grad r)_M over the concatenated pressure dofs."""
    n_pts = fluct.points.shape[0]
    nk_total = sum(p.nk for p in packs)
    out = np.zeros((nk_total, nk_total))
    for d in range(2):
        point_maps = np.zeros((n_pts, nk_total))
        col = 0
        for pack, rows in zip(packs, fluct.cell_slices):
            point_maps[rows, col : col + pack.nk] = pack.grads[:, : pack.nk, d]
            col += pack.nk
        out += _fluctuation_gram(point_maps, fluct)
    return rho * out
