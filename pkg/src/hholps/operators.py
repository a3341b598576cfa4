"""Per-cell hybrid unknowns, interpolation, and reconstruction operators.

A local hybrid block stacks the two velocity components on the cell followed
by the two components on each face, in mesh face order:

    [cell_x | cell_y | face0_x | face0_y | face1_x | face1_y | ...]

All reconstructions are realized as matrices acting on such blocks; the
scalar versions act on one component, [cell | face0 | face1 | ...], and are
scattered to both components through the index maps `ix`, `iy`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .basis import (
    CellBasis,
    FaceBasis,
    cell_basis,
    cell_basis_gradients,
    cell_basis_values,
    face_basis,
    face_basis_values,
    polynomial_dim,
)
from .meshing import PolytopalMesh
from .quadrature import QuadRule, cell_quadrature, face_quadrature


def default_exactness(k: int) -> int:
    return 2 * k + 4


@dataclass(frozen=True)
class HybridLayout:
    """Global indexing of the full hybrid vector (all cells, all faces)."""

    k: int
    nk: int  # cell space dimension per component
    fk: int  # face space dimension per component
    cell_offsets: np.ndarray
    face_offsets: np.ndarray
    total: int

    def cell_slice(self, cell: int) -> slice:
        start = self.cell_offsets[cell]
        return slice(start, start + 2 * self.nk)

    def face_slice(self, face: int) -> slice:
        start = self.face_offsets[face]
        return slice(start, start + 2 * self.fk)


def hybrid_layout(mesh: PolytopalMesh, k: int) -> HybridLayout:
    nk = polynomial_dim(k)
    fk = k + 1
    cell_offsets = 2 * nk * np.arange(mesh.n_cells + 1)
    base = cell_offsets[-1]
    face_offsets = base + 2 * fk * np.arange(mesh.n_faces + 1)
    return HybridLayout(
        k, nk, fk, cell_offsets[:-1], face_offsets[:-1], int(face_offsets[-1])
    )


def cell_dof_indexes(layout: HybridLayout, mesh: PolytopalMesh, cell: int) -> np.ndarray:
    """Full-vector indexes of the local block of `cell`."""
    parts = [np.arange(layout.cell_offsets[cell], layout.cell_offsets[cell] + 2 * layout.nk)]
    for f in mesh.cell_faces[cell]:
        parts.append(np.arange(layout.face_offsets[f], layout.face_offsets[f] + 2 * layout.fk))
    return np.concatenate(parts)


def component_indexes(nk: int, fk: int, nfaces: int):
    """Local vector indexes of the x and y copies of the scalar layout."""
    ix = [np.arange(nk)]
    iy = [nk + np.arange(nk)]
    base = 2 * nk
    for e in range(nfaces):
        ix.append(base + 2 * fk * e + np.arange(fk))
        iy.append(base + 2 * fk * e + fk + np.arange(fk))
    return np.concatenate(ix), np.concatenate(iy)


@dataclass(frozen=True)
class PackFace:
    face: int
    sign: float
    normal: np.ndarray  # outward for this cell
    rule: QuadRule
    basis: FaceBasis
    gram_cho: object
    fvals: np.ndarray  # (nq, fk) face basis values
    cvals: np.ndarray  # (nq, nk1) cell basis traces
    bn: np.ndarray  # (nq,) advection normal component b . n


@dataclass(frozen=True)
class CellOperatorPack:
    """Cached quadrature data and reconstruction matrices for one cell."""

    cell: int
    k: int
    nk: int
    nk1: int
    fk: int
    nfaces: int
    ns: int  # scalar local block length
    n_loc: int  # vector local block length
    diameter: float
    measure: float
    basis: CellBasis  # degree k+1; leading nk columns span degree k
    quad: QuadRule
    vals: np.ndarray  # (nq, nk1)
    grads: np.ndarray  # (nq, nk1, 2)
    mass1: np.ndarray
    massk_cho: object
    stiff1: np.ndarray
    int_phi: np.ndarray  # (nk1,)
    proj_k1_to_k: np.ndarray  # (nk, nk1)
    recon: np.ndarray  # (nk1, ns): coefficients of the degree-(k+1) reconstruction
    ax: np.ndarray  # (nk, nk): coefficient map of d/dx on the cell space
    ay: np.ndarray
    adv_face_coeff: np.ndarray  # (nk, ns): face-flux part of the advection operator
    adv_coeff: np.ndarray  # (nk, ns): full advection reconstruction, exact field
    div_mom: np.ndarray  # (nk, n_loc): divergence moments (mass times coefficients)
    div_coeff: np.ndarray  # (nk, n_loc)
    ix: np.ndarray
    iy: np.ndarray
    faces: tuple  # PackFace per local face

    @property
    def face_cols(self):
        """Scalar column slice of each local face block."""
        return [
            slice(self.nk + e * self.fk, self.nk + (e + 1) * self.fk)
            for e in range(self.nfaces)
        ]


def build_cell_pack(
    mesh: PolytopalMesh,
    cell: int,
    k: int,
    *,
    quad: QuadRule | None = None,
    face_rules=None,
    face_bases=None,
    b_cell=None,
    b_faces=None,
    exactness: int | None = None,
) -> CellOperatorPack:
    """Assemble the reconstruction matrices of one cell.

    `b_cell` / `b_faces` are advection values at the cell / face quadrature
    points; omitted values mean a zero advection field.  Face rules and bases
    may be shared across cells via the optional dictionaries: both sides of an
    interface must integrate with the same rule for the upwind and jump terms
    to cancel exactly in the energy identity.
    """
    deg = default_exactness(k) if exactness is None else exactness
    if quad is None:
        quad = cell_quadrature(mesh, cell, deg)
    nk = polynomial_dim(k)
    nk1 = polynomial_dim(k + 1)
    fk = k + 1
    fids = mesh.cell_faces[cell]
    nfaces = len(fids)
    ns = nk + nfaces * fk
    n_loc = 2 * ns
    h_t = float(mesh.cell_diameters[cell])

    basis = cell_basis(mesh.cell_centroids[cell], h_t, k + 1, quad)
    vals = cell_basis_values(basis, quad.points)
    grads = cell_basis_gradients(basis, quad.points)
    w = quad.weights

    mass1 = kernels.weighted_gram(vals, vals, w)
    mass1 = 0.5 * (mass1 + mass1.T)
    massk_cho = cho_factor(mass1[:nk, :nk])
    stiff1 = (
        kernels.weighted_gram(grads[:, :, 0], grads[:, :, 0], w)
        + kernels.weighted_gram(grads[:, :, 1], grads[:, :, 1], w)
    )
    stiff1 = 0.5 * (stiff1 + stiff1.T)
    int_phi = vals.T @ w
    proj_k1_to_k = cho_solve(massk_cho, mass1[:nk, :])

    if b_cell is None:
        b_cell = np.zeros((quad.n_points, 2))

    pack_faces = []
    for e, f in enumerate(fids):
        rule = face_rules[f] if face_rules is not None else face_quadrature(mesh, f, deg)
        if face_bases is not None:
            fb = face_bases[f]
        else:
            fb = face_basis(
                mesh.face_midpoints[f], mesh.face_tangents[f], mesh.face_measures[f], k, rule
            )
        sign = mesh.face_sign(cell, f)
        normal = sign * mesh.face_normals[f]
        fvals = face_basis_values(fb, rule.points)
        cvals = cell_basis_values(basis, rule.points)
        bf = b_faces[f] if b_faces is not None else np.zeros((rule.n_points, 2))
        bn = bf @ normal
        pack_faces.append(
            PackFace(f, sign, normal, rule, fb, cho_factor(fb.gram), fvals, cvals, bn)
        )

    ix, iy = component_indexes(nk, fk, nfaces)
    face_cols = [slice(nk + e * fk, nk + (e + 1) * fk) for e in range(nfaces)]

    # degree-(k+1) reconstruction: gradient matching plus a mean constraint
    rhs = np.zeros((nk1 + 1, ns))
    rhs[:nk1, :nk] = stiff1[:, :nk]
    rhs[nk1, :nk] = int_phi[:nk]
    for e, pf in enumerate(pack_faces):
        cgrads = cell_basis_gradients(basis, pf.rule.points)
        gn = cgrads @ pf.normal
        wf = pf.rule.weights
        rhs[:nk1, :nk] -= gn.T @ (wf[:, None] * pf.cvals[:, :nk])
        rhs[:nk1, face_cols[e]] = gn.T @ (wf[:, None] * pf.fvals)
    bordered = np.zeros((nk1 + 1, nk1 + 1))
    bordered[:nk1, :nk1] = stiff1
    bordered[:nk1, nk1] = int_phi
    bordered[nk1, :nk1] = int_phi
    recon = np.linalg.solve(bordered, rhs)[:nk1, :]

    # advection reconstruction moments; the face flux uses the exact field
    dx_mom = vals[:, :nk].T @ (w[:, None] * grads[:, :nk, 0])
    dy_mom = vals[:, :nk].T @ (w[:, None] * grads[:, :nk, 1])
    conv_dir = grads[:, :nk, 0] * b_cell[:, 0:1] + grads[:, :nk, 1] * b_cell[:, 1:2]
    adv_vol = vals[:, :nk].T @ (w[:, None] * conv_dir)
    adv_face_mom = np.zeros((nk, ns))
    for e, pf in enumerate(pack_faces):
        wbn = pf.rule.weights * pf.bn
        cvk = pf.cvals[:, :nk]
        adv_face_mom[:, :nk] -= cvk.T @ (wbn[:, None] * cvk)
        adv_face_mom[:, face_cols[e]] += cvk.T @ (wbn[:, None] * pf.fvals)
    ax = cho_solve(massk_cho, dx_mom)
    ay = cho_solve(massk_cho, dy_mom)
    adv_face_coeff = cho_solve(massk_cho, adv_face_mom)
    adv_mom = adv_face_mom.copy()
    adv_mom[:, :nk] += adv_vol
    adv_coeff = cho_solve(massk_cho, adv_mom)

    # divergence moments: volume part against each component plus face fluxes
    div_mom = np.zeros((nk, n_loc))
    div_mom[:, ix[:nk]] += dx_mom
    div_mom[:, iy[:nk]] += dy_mom
    for e, pf in enumerate(pack_faces):
        wf = pf.rule.weights
        cvk = pf.cvals[:, :nk]
        cmat = cvk.T @ (wf[:, None] * cvk)
        fmat = cvk.T @ (wf[:, None] * pf.fvals)
        for comp, imap in enumerate((ix, iy)):
            div_mom[:, imap[:nk]] -= pf.normal[comp] * cmat
            div_mom[:, imap[face_cols[e]]] += pf.normal[comp] * fmat
    div_coeff = cho_solve(massk_cho, div_mom)

    return CellOperatorPack(
        cell=cell,
        k=k,
        nk=nk,
        nk1=nk1,
        fk=fk,
        nfaces=nfaces,
        ns=ns,
        n_loc=n_loc,
        diameter=h_t,
        measure=float(mesh.cell_measures[cell]),
        basis=basis,
        quad=quad,
        vals=vals,
        grads=grads,
        mass1=mass1,
        massk_cho=massk_cho,
        stiff1=stiff1,
        int_phi=int_phi,
        proj_k1_to_k=proj_k1_to_k,
        recon=recon,
        ax=ax,
        ay=ay,
        adv_face_coeff=adv_face_coeff,
        adv_coeff=adv_coeff,
        div_mom=div_mom,
        div_coeff=div_coeff,
        ix=ix,
        iy=iy,
        faces=tuple(pack_faces),
    )


def interpolate_cell(pack: CellOperatorPack, u) -> np.ndarray:
    """Local hybrid block of componentwise L2 projections of a vector field."""
    block = np.zeros(pack.n_loc)
    uc = np.asarray(u(pack.quad.points), dtype=float)
    mom = pack.vals[:, : pack.nk].T @ (pack.quad.weights[:, None] * uc)
    cc = cho_solve(pack.massk_cho, mom)
    block[pack.ix[: pack.nk]] = cc[:, 0]
    block[pack.iy[: pack.nk]] = cc[:, 1]
    for e, pf in enumerate(pack.faces):
        uf = np.asarray(u(pf.rule.points), dtype=float)
        mom = pf.fvals.T @ (pf.rule.weights[:, None] * uf)
        cf = cho_solve(pf.gram_cho, mom)
        cols = pack.face_cols[e]
        block[pack.ix[cols]] = cf[:, 0]
        block[pack.iy[cols]] = cf[:, 1]
    return block


def interpolate(mesh: PolytopalMesh, layout: HybridLayout, packs, u) -> np.ndarray:
    """Full hybrid vector of the interpolate of a smooth vector field."""
    out = np.zeros(layout.total)
    nk, fk = layout.nk, layout.fk
    for cell, pack in enumerate(packs):
        uc = np.asarray(u(pack.quad.points), dtype=float)
        mom = pack.vals[:, :nk].T @ (pack.quad.weights[:, None] * uc)
        cc = cho_solve(pack.massk_cho, mom)
        s = layout.cell_offsets[cell]
        out[s : s + nk] = cc[:, 0]
        out[s + nk : s + 2 * nk] = cc[:, 1]
        for pf in pack.faces:
            if mesh.face_owner[pf.face] != cell:
                continue
            uf = np.asarray(u(pf.rule.points), dtype=float)
            mom = pf.fvals.T @ (pf.rule.weights[:, None] * uf)
            cf = cho_solve(pf.gram_cho, mom)
            s = layout.face_offsets[pf.face]
            out[s : s + fk] = cf[:, 0]
            out[s + fk : s + 2 * fk] = cf[:, 1]
    return out


def gather_block(layout: HybridLayout, mesh: PolytopalMesh, cell: int, full: np.ndarray):
    return full[cell_dof_indexes(layout, mesh, cell)]


def velocity_reconstruction(pack: CellOperatorPack, block) -> np.ndarray:
    """Coefficients (2, nk1) of the degree-(k+1) velocity reconstruction."""
    block = np.asarray(block, dtype=float)
    return np.stack([pack.recon @ block[pack.ix], pack.recon @ block[pack.iy]])


def advection_map(pack: CellOperatorPack, b_patch=None) -> np.ndarray:
    """Scalar coefficient map (nk, ns) of the advection reconstruction.

    With `b_patch` given, the volume term uses that constant field while the
    face fluxes keep the exact one.
    """
    if b_patch is None:
        return pack.adv_coeff
    out = pack.adv_face_coeff.copy()
    out[:, : pack.nk] += b_patch[0] * pack.ax + b_patch[1] * pack.ay
    return out


def advection_reconstruction(pack: CellOperatorPack, block, b_patch=None) -> np.ndarray:
    """Coefficients (2, nk) of the advective derivative reconstruction."""
    block = np.asarray(block, dtype=float)
    amap = advection_map(pack, b_patch)
    return np.stack([amap @ block[pack.ix], amap @ block[pack.iy]])


def divergence_reconstruction(pack: CellOperatorPack, block) -> np.ndarray:
    """Coefficients (nk,) of the divergence reconstruction."""
    return pack.div_coeff @ np.asarray(block, dtype=float)
