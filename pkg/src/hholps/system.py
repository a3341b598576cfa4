"""Global unknown numbering, assembly, linear solve, and condensation.

Unknown order: cell velocity blocks, interior-face velocity blocks, cell
pressure blocks, one scalar multiplier pinning the global pressure mean.
Boundary face velocities are not unknowns; they carry the Dirichlet data
(zero, or face projections of a lifted boundary field).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import splu

from .basis import face_basis, face_basis_values, patch_fluctuation
from .forms import (
    OseenCoefficients,
    build_params,
    local_convection_block,
    local_pressure_coupling,
    local_viscous_block,
    lps_block,
    normal_jump_block,
    pressure_gradient_block,
)
from .meshing import MacroDecomposition, PolytopalMesh, build_macro_decomposition
from .operators import build_cell_pack, default_exactness, hybrid_layout
from .quadrature import cell_quadrature, face_quadrature


@dataclass(frozen=True)
class DofMap:
    """Indexing of the solver unknowns (boundary velocities eliminated)."""

    k: int
    nk: int
    fk: int
    n_cells: int
    interior: np.ndarray  # interior face ids in numbering order
    face_rank: np.ndarray  # face id -> interior rank, -1 on the boundary
    face_vel_start: int
    pressure_start: int
    multiplier: int
    total: int

    def cell_vel(self, cell: int) -> np.ndarray:
        start = 2 * self.nk * cell
        return np.arange(start, start + 2 * self.nk)

    def face_vel(self, face: int) -> np.ndarray:
        rank = self.face_rank[face]
        if rank < 0:
            raise ValueError(f"face {face} is on the boundary and carries no unknowns")
        start = self.face_vel_start + 2 * self.fk * rank
        return np.arange(start, start + 2 * self.fk)

    def pressure(self, cell: int) -> np.ndarray:
        start = self.pressure_start + self.nk * cell
        return np.arange(start, start + self.nk)


def build_dofmap(mesh: PolytopalMesh, k: int) -> DofMap:
    nk = (k + 1) * (k + 2) // 2
    fk = k + 1
    interior = mesh.interior_faces
    face_rank = np.full(mesh.n_faces, -1, dtype=int)
    face_rank[interior] = np.arange(interior.size)
    face_vel_start = 2 * nk * mesh.n_cells
    pressure_start = face_vel_start + 2 * fk * interior.size
    multiplier = pressure_start + nk * mesh.n_cells
    return DofMap(
        k=k,
        nk=nk,
        fk=fk,
        n_cells=mesh.n_cells,
        interior=interior,
        face_rank=face_rank,
        face_vel_start=face_vel_start,
        pressure_start=pressure_start,
        multiplier=multiplier,
        total=multiplier + 1,
    )


def _patch_center(mesh: PolytopalMesh, cells) -> np.ndarray:
    ids = sorted({v for c in cells for v in mesh.cells[c]})
    pts = mesh.vertices[ids]
    return 0.5 * (pts.min(axis=0) + pts.max(axis=0))


class Discretization:
    """Cached per-mesh data: cell packs, shared face rules, patches, weights.

    Both cells adjacent to a face reuse one quadrature rule and one basis for
    it, and the advection field is sampled once per face point, so the upwind
    split recombines exactly in the energy identity.
    """

    def __init__(
        self,
        mesh: PolytopalMesh,
        k: int,
        coeffs: OseenCoefficients,
        macro: MacroDecomposition | str = "trivial",
        c_tau: float = 1.0,
        c_rho: float = 1.0,
        eps_guard: float = 1e-12,
        exactness: int | None = None,
    ):
        if k < 0:
            raise ValueError("polynomial degree must be nonnegative")
        self.mesh = mesh
        self.k = k
        self.coeffs = coeffs
        self.exactness = default_exactness(k) if exactness is None else exactness
        deg = self.exactness

        self.face_rules = {}
        self.face_bases = {}
        b_faces = {}
        for f in range(mesh.n_faces):
            rule = face_quadrature(mesh, f, deg)
            self.face_rules[f] = rule
            self.face_bases[f] = face_basis(
                mesh.face_midpoints[f],
                mesh.face_tangents[f],
                mesh.face_measures[f],
                k,
                rule,
            )
            b_faces[f] = coeffs.b_values(rule.points)
        self.b_faces = b_faces

        self.packs = []
        for c in range(mesh.n_cells):
            quad = cell_quadrature(mesh, c, deg)
            self.packs.append(
                build_cell_pack(
                    mesh,
                    c,
                    k,
                    quad=quad,
                    face_rules=self.face_rules,
                    face_bases=self.face_bases,
                    b_cell=coeffs.b_values(quad.points),
                    b_faces=b_faces,
                    exactness=deg,
                )
            )

        if isinstance(macro, MacroDecomposition):
            self.macro = macro
        else:
            self.macro = build_macro_decomposition(mesh, macro)
        self.layout = hybrid_layout(mesh, k)
        self.dofmap = build_dofmap(mesh, k)
        self.params = build_params(
            mesh, self.macro, self.packs, coeffs, c_tau=c_tau, c_rho=c_rho, eps_guard=eps_guard
        )

        self.fluctuations = []
        for m, cells in enumerate(self.macro.patches):
            center = _patch_center(mesh, cells)
            scale = float(self.macro.patch_diameters[m])
            self.fluctuations.append(
                patch_fluctuation(
                    m, k - 1, [self.packs[c].quad for c in cells], center, scale
                )
            )

    def cell_gdofs(self, cell: int) -> np.ndarray:
        """Solver unknowns of the local block; -1 marks boundary face dofs."""
        dm = self.dofmap
        parts = [dm.cell_vel(cell)]
        for f in self.mesh.cell_faces[cell]:
            if dm.face_rank[f] >= 0:
                parts.append(dm.face_vel(f))
            else:
                parts.append(np.full(2 * dm.fk, -1, dtype=int))
        return np.concatenate(parts)


@dataclass
class GlobalSystem:
    disc: Discretization
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    mode: str  # "homogeneous" or "lifted"
    bc_faces: dict  # boundary face id -> (2*fk,) dof values [x | y]


@dataclass(frozen=True)
class DiscreteSolution:
    """Velocity in the full hybrid layout, pressure coefficients, multiplier."""

    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float


@dataclass(frozen=True)
class SolveInfo:
    residual: float  # |b - A x| / max(|b|, 1)
    refinements: int
    n_unknowns: int


class _CooBuilder:
    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, rows: np.ndarray, cols: np.ndarray, block: np.ndarray):
        if rows.size == 0 or cols.size == 0:
            return
        self.rows.append(np.repeat(rows, cols.size))
        self.cols.append(np.tile(cols, rows.size))
        self.vals.append(np.asarray(block, dtype=float).ravel())

    def matrix(self, n: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((n, n))
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _scatter(builder: _CooBuilder, rhs, rows, cols, block, col_bvals=None):
    """Add a local block, dropping eliminated rows and lifting eliminated columns."""
    keep_r = rows >= 0
    keep_c = cols >= 0
    builder.add(rows[keep_r], cols[keep_c], block[np.ix_(keep_r, keep_c)])
    if col_bvals is not None and not keep_c.all():
        lift = block[np.ix_(keep_r, ~keep_c)] @ col_bvals[~keep_c]
        np.add.at(rhs, rows[keep_r], -lift)


def _boundary_values(disc: Discretization) -> dict:
    """Dirichlet dof values on each boundary face, [x block | y block]."""
    mesh, coeffs = disc.mesh, disc.coeffs
    fk = disc.dofmap.fk
    out = {}
    for f in mesh.boundary_faces:
        if coeffs.dirichlet is None:
            out[f] = np.zeros(2 * fk)
            continue
        rule = disc.face_rules[f]
        fb = disc.face_bases[f]
        vals = face_basis_values(fb, rule.points)
        gvals = np.asarray(coeffs.dirichlet(rule.points), dtype=float)
        mom = vals.T @ (rule.weights[:, None] * gvals)
        cf = np.linalg.solve(fb.gram, mom)
        out[f] = np.concatenate([cf[:, 0], cf[:, 1]])
    return out


def assemble(disc: Discretization) -> GlobalSystem:
    """Build the sparse saddle system and its right-hand side."""
    mesh, dm, coeffs = disc.mesh, disc.dofmap, disc.coeffs
    params = disc.params
    mode = "homogeneous" if coeffs.dirichlet is None else "lifted"
    bc_faces = _boundary_values(disc)

    builder = _CooBuilder()
    rhs = np.zeros(dm.total)

    for c, pack in enumerate(disc.packs):
        gdofs = disc.cell_gdofs(c)
        bvals = np.zeros(pack.n_loc)
        for e, f in enumerate(mesh.cell_faces[c]):
            if dm.face_rank[f] < 0:
                cols = pack.face_cols[e]
                bvals[pack.ix[cols]] = bc_faces[f][: dm.fk]
                bvals[pack.iy[cols]] = bc_faces[f][dm.fk :]

        block = (
            local_viscous_block(pack, coeffs.epsilon)
            + local_convection_block(pack, coeffs.sigma)
            + normal_jump_block(pack)
        )
        _scatter(builder, rhs, gdofs, gdofs, block, bvals)

        div_mom = local_pressure_coupling(pack)
        prows = dm.pressure(c)
        _scatter(builder, rhs, prows, gdofs, div_mom, bvals)
        _scatter(builder, rhs, gdofs, prows, -div_mom.T)

        # pressure mean constraint through the multiplier
        wcell = pack.int_phi[: dm.nk]
        builder.add(prows, np.array([dm.multiplier]), wcell[:, None])
        builder.add(np.array([dm.multiplier]), prows, wcell[None, :])

        fvals = coeffs.f_values(pack.quad.points)
        mom = pack.vals[:, : dm.nk].T @ (pack.quad.weights[:, None] * fvals)
        cv = dm.cell_vel(c)
        rhs[cv[: dm.nk]] += mom[:, 0]
        rhs[cv[dm.nk :]] += mom[:, 1]

    for m, cells in enumerate(disc.macro.patches):
        packs = [disc.packs[c] for c in cells]
        fluct = disc.fluctuations[m]
        gdofs = np.concatenate([disc.cell_gdofs(c) for c in cells])
        bvals = []
        for c in cells:
            pack = disc.packs[c]
            bv = np.zeros(pack.n_loc)
            for e, f in enumerate(mesh.cell_faces[c]):
                if dm.face_rank[f] < 0:
                    cols = pack.face_cols[e]
                    bv[pack.ix[cols]] = bc_faces[f][: dm.fk]
                    bv[pack.iy[cols]] = bc_faces[f][dm.fk :]
            bvals.append(bv)
        bvals = np.concatenate(bvals)
        block = lps_block(packs, params.tau[m], params.b_mean[m], fluct)
        _scatter(builder, rhs, gdofs, gdofs, block, bvals)

        prows = np.concatenate([dm.pressure(c) for c in cells])
        pblock = pressure_gradient_block(packs, params.rho[m], fluct)
        _scatter(builder, rhs, prows, prows, pblock)

    matrix = builder.matrix(dm.total)
    return GlobalSystem(disc, matrix, rhs, dm, mode, bc_faces)


def expand_solution(system: GlobalSystem, x: np.ndarray) -> DiscreteSolution:
    disc, dm = system.disc, system.dofmap
    layout = disc.layout
    vel = np.zeros(layout.total)
    for c in range(dm.n_cells):
        vel[layout.cell_slice(c)] = x[dm.cell_vel(c)]
    for f in dm.interior:
        vel[layout.face_slice(f)] = x[dm.face_vel(f)]
    for f, g in system.bc_faces.items():
        vel[layout.face_slice(f)] = g
    pressure = x[dm.pressure_start : dm.multiplier].copy()
    return DiscreteSolution(vel, pressure, float(x[dm.multiplier]))


def _refine(matrix, lu, rhs, tol, max_rounds=3):
    x = lu.solve(rhs)
    scale = max(float(np.linalg.norm(rhs)), 1.0)
    rounds = 0
    res = float(np.linalg.norm(rhs - matrix @ x)) / scale
    while res > tol and rounds < max_rounds:
        x += lu.solve(rhs - matrix @ x)
        rounds += 1
        res = float(np.linalg.norm(rhs - matrix @ x)) / scale
    return x, res, rounds


def solve(system: GlobalSystem, tol: float = 1e-9):
    """Direct solve with iterative refinement; returns (solution, info)."""
    matrix = system.matrix.tocsc()
    lu = splu(matrix)
    x, res, rounds = _refine(system.matrix, lu, system.rhs, tol)
    return expand_solution(system, x), SolveInfo(res, rounds, system.dofmap.total)


@dataclass
class CondensedSystem:
    parent: GlobalSystem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    keep_start: int  # unknowns >= keep_start survive; cell velocities are eliminated
    cell_factors: list  # per cell: (lu_piv, coupling rows to kept unknowns, local rhs)


def static_condensation(system: GlobalSystem) -> CondensedSystem:
    """Eliminate cell velocity unknowns by cellwise Schur complements.

    Valid only with single-cell patches: overlapping patches couple cell
    velocities of different cells and the eliminated block is no longer
    block diagonal.
    """
    disc = system.disc
    if disc.macro.mode != "trivial":
        raise ValueError(
            "static condensation requires the trivial macro decomposition; "
            f"got mode '{disc.macro.mode}'"
        )
    dm = system.dofmap
    cell_end = dm.face_vel_start
    a = system.matrix.tocsr()
    akk = a[cell_end:, cell_end:].tocoo()
    aek = a[:cell_end, cell_end:].tocsr()
    ake = a[cell_end:, :cell_end].tocsc()
    aee = a[:cell_end, :cell_end].tocsr()

    nkeep = dm.total - cell_end
    rows = [akk.row]
    cols = [akk.col]
    vals = [akk.data]
    rhs_k = system.rhs[cell_end:].copy()
    cell_factors = []
    width = 2 * dm.nk
    for c in range(dm.n_cells):
        r0, r1 = width * c, width * (c + 1)
        acc = aee[r0:r1, r0:r1].toarray()
        lu_piv = lu_factor(acc)
        ace = aek[r0:r1]
        aec = ake[:, r0:r1]
        local_rhs = system.rhs[r0:r1].copy()
        # CSC indices are row ids: the kept unknowns this cell block touches
        touched = np.unique(aec.indices) if aec.nnz else np.array([], dtype=int)
        cell_factors.append((lu_piv, ace, local_rhs))
        if touched.size == 0:
            continue
        aec_d = aec.tocsr()[touched].toarray()
        cols_t = np.unique(ace.indices) if ace.nnz else np.array([], dtype=int)
        if cols_t.size:
            x = lu_solve(lu_piv, ace[:, cols_t].toarray())
            delta = aec_d @ x
            rows.append(np.repeat(touched, cols_t.size))
            cols.append(np.tile(cols_t, touched.size))
            vals.append(-delta.ravel())
        rhs_k[touched] -= aec_d @ lu_solve(lu_piv, local_rhs)

    reduced = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nkeep, nkeep),
    ).tocsr()
    return CondensedSystem(system, reduced, rhs_k, cell_end, cell_factors)


def solve_condensed(cond: CondensedSystem, tol: float = 1e-9):
    """Solve the reduced system, recover cell velocities, check the full residual."""
    lu = splu(cond.matrix.tocsc())
    xk, _, rounds = _refine(cond.matrix, lu, cond.rhs, tol)
    system = cond.parent
    dm = system.dofmap
    x = np.zeros(dm.total)
    x[cond.keep_start :] = xk
    width = 2 * dm.nk
    for c, (lu_piv, ace, local_rhs) in enumerate(cond.cell_factors):
        x[width * c : width * (c + 1)] = lu_solve(lu_piv, local_rhs - ace @ xk)
    scale = max(float(np.linalg.norm(system.rhs)), 1.0)
    res = float(np.linalg.norm(system.rhs - system.matrix @ x)) / scale
    return expand_solution(system, x), SolveInfo(res, rounds, cond.matrix.shape[0])


def dump_system(system: GlobalSystem, path_prefix):
    """Write '<prefix>_matrix.txt' (row col value per line) and '<prefix>_rhs.txt'."""
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(f"{path_prefix}_matrix.txt", "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17e}\n")
    with open(f"{path_prefix}_rhs.txt", "w") as fh:
        for v in system.rhs:
            fh.write(f"{v:.17e}\n")
