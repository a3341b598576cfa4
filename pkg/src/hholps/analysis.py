"""Discrete norms, manufactured-solution errors, rates, and diagnostics.

The energy-type norms are evaluated from the cached cell packs; `norm_b` and
`norm_supg` sum pointwise quadrature contributions directly, so they double
as independent checks on the assembled blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, qr

from .forms import (
    face_jump_eval,
    local_viscous_block,
    lps_block,
    normal_jump_block,
    pressure_gradient_block,
    scatter_components,
)
from .operators import gather_block, interpolate
from .system import Discretization, DiscreteSolution, GlobalSystem


@dataclass
class ErrorReport:
    """Norms of the interpolant-minus-discrete error pair on one mesh."""

    level: int
    h: float
    ndof: int
    err_LP: float
    err_supg: float
    err_b: float
    err_eps: float
    err_st: float
    err_p: float  # L2 norm of the pressure error
    err_u_l2: float  # exact-versus-discrete velocity L2, informational
    rate_LP: float | None = None
    rate_supg: float | None = None
    rate_b: float | None = None
    rate_eps: float | None = None
    rate_st: float | None = None
    rate_p: float | None = None


def _component_blocks(pack, block):
    return block[pack.ix], block[pack.iy]


def norm_1h(disc: Discretization, vel: np.ndarray) -> float:
    """Broken H1 seminorm plus scaled face jumps of the hybrid velocity."""
    total = 0.0
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, vel)
        nk = pack.nk
        grad_gram = pack.stiff1[:nk, :nk]
        for vc in _component_blocks(pack, block):
            total += vc[:nk] @ grad_gram @ vc[:nk]
            for e, pf in enumerate(pack.faces):
                jvals = face_jump_eval(pack, e) @ vc
                total += (pf.rule.weights @ jvals**2) / pf.basis.scale
    return math.sqrt(max(total, 0.0))


def norm_eps(disc: Discretization, vel: np.ndarray) -> float:
    """Energy norm of the viscous block (reconstruction plus stabilisation)."""
    total = 0.0
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, vel)
        total += block @ local_viscous_block(pack, disc.coeffs.epsilon) @ block
    return math.sqrt(max(total, 0.0))


def norm_b(disc: Discretization, vel: np.ndarray) -> float:
    """Reaction and upwind-jump norm, summed pointwise from quadrature."""
    sigma = disc.coeffs.sigma
    total = 0.0
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, vel)
        for vc in _component_blocks(pack, block):
            cell_vals = pack.vals[:, : pack.nk] @ vc[: pack.nk]
            total += sigma * (pack.quad.weights @ cell_vals**2)
            for e, pf in enumerate(pack.faces):
                jvals = face_jump_eval(pack, e) @ vc
                total += 0.5 * (pf.rule.weights * np.abs(pf.bn)) @ jvals**2
    return math.sqrt(max(total, 0.0))


def norm_st(disc: Discretization, vel: np.ndarray, pres: np.ndarray) -> float:
    """Stabilisation norm: normal jumps, LPS advection, pressure-gradient terms."""
    total = 0.0
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, vel)
        total += block @ normal_jump_block(pack) @ block
    params = disc.params
    nk = disc.dofmap.nk
    for m, cells in enumerate(disc.macro.patches):
        packs = [disc.packs[c] for c in cells]
        fluct = disc.fluctuations[m]
        vblock = np.concatenate(
            [gather_block(disc.layout, disc.mesh, c, vel) for c in cells]
        )
        total += vblock @ lps_block(packs, params.tau[m], params.b_mean[m], fluct) @ vblock
        pblock = np.concatenate([pres[nk * c : nk * (c + 1)] for c in cells])
        total += pblock @ pressure_gradient_block(packs, params.rho[m], fluct) @ pblock
    return math.sqrt(max(total, 0.0))


def norm_supg(disc: Discretization, vel: np.ndarray, pres: np.ndarray) -> float:
    """Patch-weighted advective-derivative-plus-pressure-gradient seminorm.

    Uses the advection reconstruction with the exact field and no fluctuation
    filter, summed by direct quadrature.
    """
    params = disc.params
    nk = disc.dofmap.nk
    total = 0.0
    for m, cells in enumerate(disc.macro.patches):
        acc = 0.0
        for c in cells:
            pack = disc.packs[c]
            block = gather_block(disc.layout, disc.mesh, c, vel)
            qc = pres[nk * c : nk * (c + 1)]
            for d, vc in enumerate(_component_blocks(pack, block)):
                gvals = pack.vals[:, :nk] @ (pack.adv_coeff @ vc)
                pvals = pack.grads[:, :nk, d] @ qc
                acc += pack.quad.weights @ (gvals + pvals) ** 2
        total += params.gamma[m] * acc
    return math.sqrt(max(total, 0.0))


def pressure_l2(disc: Discretization, pres: np.ndarray) -> float:
    nk = disc.dofmap.nk
    total = 0.0
    for c, pack in enumerate(disc.packs):
        qc = pres[nk * c : nk * (c + 1)]
        total += qc @ pack.mass1[:nk, :nk] @ qc
    return math.sqrt(max(total, 0.0))


def velocity_l2(disc: Discretization, vel: np.ndarray) -> float:
    """L2 norm of the cell components of a hybrid velocity."""
    total = 0.0
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, vel)
        for vc in _component_blocks(pack, block):
            total += vc[: pack.nk] @ pack.mass1[: pack.nk, : pack.nk] @ vc[: pack.nk]
    return math.sqrt(max(total, 0.0))


def norm_LP(disc: Discretization, vel: np.ndarray, pres: np.ndarray) -> float:
    parts = lp_components(disc, vel, pres)
    return parts["LP"]


def lp_components(disc: Discretization, vel: np.ndarray, pres: np.ndarray) -> dict:
    """All norm pieces and their stabilised combination, computed once."""
    coeffs = disc.coeffs
    n_eps = norm_eps(disc, vel)
    n_b = norm_b(disc, vel)
    n_st = norm_st(disc, vel, pres)
    n_supg = norm_supg(disc, vel, pres)
    n_p = pressure_l2(disc, pres)
    omega = disc.params.omega
    squared = (
        n_eps**2
        + n_b**2
        + n_st**2
        + n_supg**2 / (1.0 + omega)
        + (coeffs.epsilon + coeffs.sigma) * n_p**2
    )
    return {
        "eps": n_eps,
        "b": n_b,
        "st": n_st,
        "supg": n_supg,
        "p": n_p,
        "LP": math.sqrt(max(squared, 0.0)),
    }


def project_pressure(disc: Discretization, p) -> np.ndarray:
    """Cellwise L2 projection coefficients of a scalar field."""
    nk = disc.dofmap.nk
    out = np.zeros(nk * disc.mesh.n_cells)
    for c, pack in enumerate(disc.packs):
        pv = np.asarray(p(pack.quad.points), dtype=float)
        mom = pack.vals[:, :nk].T @ (pack.quad.weights * pv)
        out[nk * c : nk * (c + 1)] = cho_solve(pack.massk_cho, mom)
    return out


def compute_errors(
    disc: Discretization,
    solution: DiscreteSolution,
    case,
    level: int = 0,
    ndof: int | None = None,
) -> ErrorReport:
    """Error report for the pair (interpolate(u) - u_h, project(p) - p_h)."""
    iu = interpolate(disc.mesh, disc.layout, disc.packs, case.velocity)
    ip = project_pressure(disc, case.pressure)
    evel = iu - solution.velocity
    epres = ip - solution.pressure
    parts = lp_components(disc, evel, epres)

    u_l2_sq = 0.0
    nk = disc.dofmap.nk
    for c, pack in enumerate(disc.packs):
        block = gather_block(disc.layout, disc.mesh, c, solution.velocity)
        uex = np.asarray(case.velocity(pack.quad.points), dtype=float)
        for d, vc in enumerate(_component_blocks(pack, block)):
            diff = uex[:, d] - pack.vals[:, :nk] @ vc[:nk]
            u_l2_sq += pack.quad.weights @ diff**2

    return ErrorReport(
        level=level,
        h=float(disc.mesh.h_max),
        ndof=disc.dofmap.total if ndof is None else ndof,
        err_LP=parts["LP"],
        err_supg=parts["supg"],
        err_b=parts["b"],
        err_eps=parts["eps"],
        err_st=parts["st"],
        err_p=parts["p"],
        err_u_l2=math.sqrt(max(u_l2_sq, 0.0)),
    )


def compute_rate(err_pairs) -> list:
    """Empirical orders between consecutive (h, err) pairs; None if undefined."""
    out = []
    for (h0, e0), (h1, e1) in zip(err_pairs, err_pairs[1:]):
        if e0 <= 0.0 or e1 <= 0.0 or h0 == h1:
            out.append(None)
        else:
            out.append(math.log(e1 / e0) / math.log(h1 / h0))
    return out


def _velocity_gram_1h(disc: Discretization) -> np.ndarray:
    """Dense Gram of the 1,h norm on the velocity unknowns."""
    n = disc.dofmap.pressure_start
    gram = np.zeros((n, n))
    for c, pack in enumerate(disc.packs):
        nk = pack.nk
        scalar = np.zeros((pack.ns, pack.ns))
        scalar[:nk, :nk] = pack.stiff1[:nk, :nk]
        for e, pf in enumerate(pack.faces):
            jump = face_jump_eval(pack, e)
            scalar += jump.T @ (pf.rule.weights[:, None] * jump) / pf.basis.scale
        block = scatter_components(scalar, pack)
        gdofs = disc.cell_gdofs(c)
        keep = gdofs >= 0
        idx = gdofs[keep]
        gram[np.ix_(idx, idx)] += block[np.ix_(keep, keep)]
    return gram


def infsup_diagnostic(system: GlobalSystem, max_unknowns: int = 6000) -> float | None:
    """Smallest generalized singular value of the velocity-pressure coupling.

    Dense computation: minimizes sup_v (D v, q) / (|v|_1h |q|) over zero-mean
    pressures.  Returns None when the mesh has no interior faces (the
    degenerate single-cell setting).
    """
    dm = system.dofmap
    disc = system.disc
    if dm.interior.size == 0:
        return None
    if dm.total > max_unknowns:
        raise ValueError(
            f"system with {dm.total} unknowns is too large for the dense "
            f"diagnostic (limit {max_unknowns}); use a smaller mesh"
        )
    nvel = dm.pressure_start
    npres = dm.multiplier - dm.pressure_start
    bmat = system.matrix[nvel : dm.multiplier, :nvel].toarray()

    gram = _velocity_gram_1h(disc)
    gram_cho = cho_factor(gram)
    schur = bmat @ cho_solve(gram_cho, bmat.T)

    mass = np.zeros((npres, npres))
    weights = np.zeros(npres)
    nk = dm.nk
    for c, pack in enumerate(disc.packs):
        sl = slice(nk * c, nk * (c + 1))
        mass[sl, sl] = pack.mass1[:nk, :nk]
        weights[sl] = pack.int_phi[:nk]

    qmat = qr(weights[:, None], mode="full")[0]
    zbasis = qmat[:, 1:]
    lhs = zbasis.T @ schur @ zbasis
    rhs = zbasis.T @ mass @ zbasis
    vals = eigh(lhs, rhs, eigvals_only=True)
    return math.sqrt(max(float(vals[0]), 0.0))


def coercivity_gap(system: GlobalSystem, vel, pres) -> float:
    """Relative defect of the energy identity at one hybrid pair.

    The full form evaluated at a pair against itself must reproduce the sum
    of the eps, b, and st squared norms; the pressure coupling cancels by
    antisymmetry.
    """
    disc = system.disc
    dm = system.dofmap
    x = np.zeros(dm.total)
    for c in range(dm.n_cells):
        x[dm.cell_vel(c)] = vel[disc.layout.cell_slice(c)]
        x[dm.pressure(c)] = pres[dm.nk * c : dm.nk * (c + 1)]
    for f in dm.interior:
        x[dm.face_vel(f)] = vel[disc.layout.face_slice(f)]
    quad_form = float(x @ (system.matrix @ x))
    expected = (
        norm_eps(disc, vel) ** 2
        + norm_b(disc, vel) ** 2
        + norm_st(disc, vel, pres) ** 2
    )
    scale = max(abs(quad_form), abs(expected), 1e-300)
    return abs(quad_form - expected) / scale
