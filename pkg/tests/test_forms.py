"""Local bilinear-form blocks and the stabilisation parameters.

Everything here is checked against direct quadrature or a dense oracle that
applies the fluctuation pointwise, never against the block builders
themselves."""

import numpy as np
import pytest
from scipy.linalg import cho_solve

from hholps.basis import apply_fluctuation
from hholps.forms import (
    OseenCoefficients,
    build_params,
    face_jump_eval,
    local_convection_block,
    local_pressure_coupling,
    local_viscous_block,
    lps_block,
    normal_jump_block,
    pressure_gradient_block,
    viscous_stabilisation,
)
from hholps.meshing import mesh_from_arrays
from hholps.operators import interpolate, interpolate_cell
from hholps.system import Discretization

from conftest import discretization, mesh

# gamma closed form at h_M = 0.1, b = (1,1), sigma = 1, eps = 1e-8
GAMMA_ORACLE = 0.01 / 0.2514213662373095


def constant_coeffs(epsilon, sigma=1.0, b=(1.0, 1.0)):
    barr = np.asarray(b, dtype=float)

    def b_field(points):
        return np.tile(barr, (np.asarray(points).shape[0], 1))

    def b_grad(points):
        return np.zeros((np.asarray(points).shape[0], 2, 2))

    return OseenCoefficients(epsilon=epsilon, sigma=sigma, b=b_field,
                             b_grad=b_grad, f=None)


def single_square(side=1.0, k=1, coeffs=None):
    verts = side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    msh = mesh_from_arrays(verts, [[0, 1, 2, 3]])
    if coeffs is None:
        coeffs = constant_coeffs(1e-8)
    return Discretization(msh, k, coeffs)


def quad_form(block, x):
    return float(x @ block @ x)


def interp_block(pack, u):
    return interpolate_cell(pack, u)


# stabilisation parameters


def test_gamma_frozen_oracle():
    disc = single_square(side=0.1 / np.sqrt(2.0), coeffs=constant_coeffs(1e-8))
    g = disc.params.gamma[0]
    assert abs(g - GAMMA_ORACLE) <= 1e-9 * GAMMA_ORACLE


def test_tau_rho_omega_constant_b():
    disc = single_square(side=0.1 / np.sqrt(2.0), coeffs=constant_coeffs(1e-8))
    p = disc.params
    assert abs(p.tau[0] - 0.1 / np.sqrt(2.0)) <= 1e-12
    assert abs(p.rho[0] - 0.1) <= 1e-12
    assert p.omega == 0.0
    assert np.allclose(p.b_mean[0], [1.0, 1.0], atol=1e-14)
    assert abs(p.b_sup[0] - np.sqrt(2.0)) <= 1e-14


def test_zero_advection_guard_path(rng):
    disc = single_square(coeffs=constant_coeffs(1e-2, b=(0.0, 0.0)))
    p = disc.params
    h = disc.macro.patch_diameters[0]
    assert np.isfinite(p.tau[0])
    assert abs(p.tau[0] - h / 1e-12) <= 1e-3 * p.tau[0]
    pack = disc.packs[0]
    block = lps_block([pack], p.tau[0], p.b_mean[0], disc.fluctuations[0])
    # G vanishes identically, so the block must too despite the huge tau
    assert np.abs(block).max() <= 1e-9


def test_omega_finite_difference_fallback():
    def b_field(points):
        pts = np.asarray(points)
        return np.column_stack([1.0 + 0.5 * pts[:, 1], 1.0 - 0.5 * pts[:, 0]])

    coeffs = OseenCoefficients(epsilon=1.0, sigma=1.0, b=b_field, f=None)
    msh = mesh("cartesian", 0)
    disc = Discretization(msh, 1, coeffs)
    # |b|_{1,inf} = 0.5; omega = max h_M^2 * 0.5 / (eps + sigma h_M^2)
    hm = disc.macro.patch_diameters
    want = np.max(hm**2 * 0.5 / (1.0 + hm**2))
    assert abs(disc.params.omega - want) <= 1e-5


# viscous block and its stabilisation


def test_viscous_constant_in_kernel():
    disc = discretization("hexagonal", 0, 1)
    pack = disc.packs[0]
    block = interp_block(pack, lambda p: np.tile([1.0, 2.0], (p.shape[0], 1)))
    a = local_viscous_block(pack, 1.0)
    scale = np.abs(a).max()
    assert quad_form(a, block) <= 1e-13 * scale


@pytest.mark.parametrize("k", [0, 1, 2])
def test_viscous_symmetry(k, rng):
    disc = discretization("hexagonal", 1, k)
    for cell in rng.choice(disc.mesh.n_cells, size=5, replace=False):
        a = local_viscous_block(disc.packs[cell], 1e-4)
        assert np.abs(a - a.T).max() <= 1e-13 * np.abs(a).max()


@pytest.mark.parametrize("family", ["triangular", "hexagonal"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_stabilisation_consistency_degree_kp1(family, k, rng):
    from test_operators import poly_fields

    disc = discretization(family, 0, k)
    u, _ = poly_fields(k + 1, rng)
    for cell in range(min(disc.mesh.n_cells, 4)):
        pack = disc.packs[cell]
        block = interp_block(pack, u)
        s = viscous_stabilisation(pack)
        scale = max(np.abs(s).max(), 1.0)
        val = quad_form(s, block[pack.ix]) + quad_form(s, block[pack.iy])
        assert val <= 1e-12 * scale


# convection block


def test_convection_reduces_to_mass_when_b_zero(rng):
    disc = single_square(k=1, coeffs=constant_coeffs(1.0, sigma=2.5, b=(0.0, 0.0)))
    pack = disc.packs[0]
    a = local_convection_block(pack, 2.5)
    x = rng.standard_normal(pack.n_loc)
    w = pack.quad.weights
    vx = pack.vals[:, : pack.nk] @ x[pack.ix[: pack.nk]]
    vy = pack.vals[:, : pack.nk] @ x[pack.iy[: pack.nk]]
    want = 2.5 * np.sum(w * (vx**2 + vy**2))
    assert abs(quad_form(a, x) - want) <= 1e-12 * max(want, 1.0)


def test_convection_constant_block():
    disc = discretization("cartesian", 0, 1)
    pack = disc.packs[0]
    c = np.array([0.7, -1.2])
    block = interp_block(pack, lambda p: np.tile(c, (p.shape[0], 1)))
    a = local_convection_block(pack, 1.0)
    want = pack.measure * float(c @ c)  # sigma |T| |c|^2
    assert abs(quad_form(a, block) - want) <= 1e-12 * want


def _convection_identity_parts(pack, x, sigma):
    """Direct quadrature of sigma ||v_T||^2, upwind jumps, and face fluxes."""
    w = pack.quad.weights
    vt_x = pack.vals[:, : pack.nk] @ x[pack.ix[: pack.nk]]
    vt_y = pack.vals[:, : pack.nk] @ x[pack.iy[: pack.nk]]
    mass = sigma * np.sum(w * (vt_x**2 + vt_y**2))
    jumps = 0.0
    flux = 0.0
    for e, pf in enumerate(pack.faces):
        jm = face_jump_eval(pack, e)
        jx = jm @ x[pack.ix]
        jy = jm @ x[pack.iy]
        jumps += 0.5 * np.sum(pf.rule.weights * np.abs(pf.bn) * (jx**2 + jy**2))
        vfx = pf.fvals @ x[pack.ix[pack.face_cols[e]]]
        vfy = pf.fvals @ x[pack.iy[pack.face_cols[e]]]
        flux += 0.5 * np.sum(pf.rule.weights * pf.bn * (vfx**2 + vfy**2))
    return mass, jumps, flux


def test_convection_diagonal_identity_per_cell(rng):
    disc = discretization("hexagonal", 0, 1)
    for cell in (0, 3, 5):
        pack = disc.packs[cell]
        x = rng.standard_normal(pack.n_loc)
        a = local_convection_block(pack, 1.0)
        mass, jumps, flux = _convection_identity_parts(pack, x, 1.0)
        want = mass + jumps - flux
        assert abs(quad_form(a, x) - want) <= 1e-12 * abs(want)


@pytest.mark.parametrize("family", ["triangular", "cartesian", "hexagonal"])
def test_convection_diagonal_identity_global(family, rng):
    """Summed over cells the face fluxes cancel, leaving the global identity
    sigma||v_T||^2 + half upwind jumps, for vectors vanishing on the boundary."""
    disc = discretization(family, 1, 1)
    full = rng.standard_normal(disc.layout.total)
    for f in disc.mesh.boundary_faces:
        full[disc.layout.face_slice(f)] = 0.0
    total_form = 0.0
    total_rhs = 0.0
    from hholps.operators import gather_block

    for cell in range(disc.mesh.n_cells):
        pack = disc.packs[cell]
        x = gather_block(disc.layout, disc.mesh, cell, full)
        a = local_convection_block(pack, 1.0)
        total_form += quad_form(a, x)
        mass, jumps, _ = _convection_identity_parts(pack, x, 1.0)
        total_rhs += mass + jumps
    assert abs(total_form - total_rhs) <= 1e-11 * abs(total_rhs)


# pressure coupling moments


def _constant_pressure_coeff(pack):
    w = pack.quad.weights
    vals_k = pack.vals[:, : pack.nk]
    return cho_solve(pack.massk_cho, vals_k.T @ w)


def test_pressure_coupling_dilation():
    disc = discretization("cartesian", 0, 1)
    pack = disc.packs[0]
    block = interp_block(pack, lambda p: p.copy())
    mom = local_pressure_coupling(pack) @ block
    c1 = _constant_pressure_coeff(pack)
    assert abs(c1 @ mom - 2.0 * pack.measure) <= 1e-12


def test_pressure_coupling_divergence_free_global(rng):
    disc = discretization("triangular", 1, 1)

    def u(points):
        x, y = points[:, 0], points[:, 1]
        return np.column_stack([x**2, -2.0 * x * y])

    full = interpolate(disc.mesh, disc.layout, disc.packs, u)
    from hholps.operators import gather_block

    total = 0.0
    scale = 0.0
    for cell in range(disc.mesh.n_cells):
        pack = disc.packs[cell]
        block = gather_block(disc.layout, disc.mesh, cell, full)
        q = rng.standard_normal(pack.nk)
        term = q @ (local_pressure_coupling(pack) @ block)
        total += term
        scale += abs(term)
    assert abs(total) <= 1e-11 * max(scale, 1.0)


def test_pressure_coupling_face_only_matches_quadrature(rng):
    disc = discretization("hexagonal", 0, 1)
    pack = disc.packs[4]
    x = rng.standard_normal(pack.n_loc)
    x[pack.ix[: pack.nk]] = 0.0
    x[pack.iy[: pack.nk]] = 0.0
    q = rng.standard_normal(pack.nk)
    got = q @ (local_pressure_coupling(pack) @ x)
    want = 0.0
    for e, pf in enumerate(pack.faces):
        vfx = pf.fvals @ x[pack.ix[pack.face_cols[e]]]
        vfy = pf.fvals @ x[pack.iy[pack.face_cols[e]]]
        qv = pf.cvals[:, : pack.nk] @ q
        vn = vfx * pf.normal[0] + vfy * pf.normal[1]
        want += np.sum(pf.rule.weights * vn * qv)
    assert abs(got - want) <= 1e-12 * max(abs(want), 1.0)


# LPS block


def test_lps_annihilates_interpolated_polynomials(rng):
    from test_operators import poly_fields

    for k in (1, 2):
        disc = discretization("cartesian", 0, k)
        u, _ = poly_fields(k, rng)
        pack = disc.packs[1]
        block = interp_block(pack, u)
        m = pack.cell  # trivial macro: patch id = cell id
        lps = lps_block([pack], disc.params.tau[m], disc.params.b_mean[m],
                        disc.fluctuations[m])
        scale = max(np.abs(lps).max(), 1.0)
        assert quad_form(lps, block) <= 1e-12 * scale


def test_lps_k0_is_plain_gram(rng):
    disc = discretization("triangular", 0, 0)
    pack = disc.packs[0]
    m = pack.cell
    fluct = disc.fluctuations[m]
    assert fluct.values is None  # K = Id for k = 0
    lps = lps_block([pack], disc.params.tau[m], disc.params.b_mean[m], fluct)
    x = rng.standard_normal(pack.n_loc)
    assert quad_form(lps, x) > 0.0
    # oracle: tau * ||G x||^2 by direct quadrature
    from hholps.operators import advection_reconstruction

    g = advection_reconstruction(pack, x, disc.params.b_mean[m])
    w = pack.quad.weights
    vals_k = pack.vals[:, : pack.nk]
    want = disc.params.tau[m] * np.sum(w * ((vals_k @ g[0]) ** 2 + (vals_k @ g[1]) ** 2))
    assert abs(quad_form(lps, x) - want) <= 1e-11 * want


def test_lps_dense_oracle_single_cell_k1(rng):
    disc = single_square(k=1, coeffs=constant_coeffs(1e-6))
    pack = disc.packs[0]
    fluct = disc.fluctuations[0]
    tau = disc.params.tau[0]
    b_m = disc.params.b_mean[0]
    lps = lps_block([pack], tau, b_m, fluct)

    from hholps.operators import advection_map

    amap = pack.vals[:, : pack.nk] @ advection_map(pack, b_m)
    filtered = np.column_stack(
        [apply_fluctuation(fluct, amap[:, j]) for j in range(amap.shape[1])]
    )
    scalar = tau * filtered.T @ (fluct.weights[:, None] * filtered)
    dense = np.zeros_like(lps)
    dense[np.ix_(pack.ix, pack.ix)] = scalar
    dense[np.ix_(pack.iy, pack.iy)] = scalar
    assert np.abs(lps - dense).max() <= 1e-11 * max(np.abs(dense).max(), 1.0)


# normal jump block


def test_normal_jump_zero_for_constants_and_polys(rng):
    from test_operators import poly_fields

    disc = discretization("hexagonal", 0, 1)
    pack = disc.packs[1]
    a = normal_jump_block(pack)
    scale = max(np.abs(a).max(), 1.0)

    const = interp_block(pack, lambda p: np.tile([0.4, 1.1], (p.shape[0], 1)))
    assert quad_form(a, const) <= 1e-12 * scale

    u, _ = poly_fields(1, rng)
    block = interp_block(pack, u)
    assert quad_form(a, block) <= 1e-12 * scale


def test_normal_jump_unit_face_entry():
    disc = single_square(k=0)
    pack = disc.packs[0]
    a = normal_jump_block(pack)
    e = 0
    pf = pack.faces[e]
    x = np.zeros(pack.n_loc)
    cols = pack.face_cols[e]
    # constant face value equal to the outward normal
    x[pack.ix[cols]] = pf.normal[0] / pf.fvals[0, 0]
    x[pack.iy[cols]] = pf.normal[1] / pf.fvals[0, 0]
    assert abs(quad_form(a, x) - 1.0) <= 1e-12  # |F| = 1 on the unit square


# pressure gradient block


def test_pressure_gradient_trivial_zero():
    disc = discretization("hexagonal", 1, 1)
    worst = 0.0
    for m, cells in enumerate(disc.macro.patches):
        blk = pressure_gradient_block([disc.packs[c] for c in cells],
                                      disc.params.rho[m], disc.fluctuations[m])
        worst = max(worst, np.abs(blk).max())
    assert worst <= 1e-10


def test_pressure_gradient_vertex_single_polynomial_zero():
    disc = discretization("cartesian", 0, 1, macro="vertex")
    # the 4-cell patch around the interior vertex
    m = next(i for i, p in enumerate(disc.macro.patches) if len(p) == 4)
    cells = disc.macro.patches[m]
    packs = [disc.packs[c] for c in cells]

    def q(points):
        return 0.3 + 2.0 * points[:, 0] - points[:, 1]

    coeffs = []
    for pack in packs:
        w = pack.quad.weights
        vals_k = pack.vals[:, : pack.nk]
        coeffs.append(cho_solve(pack.massk_cho, vals_k.T @ (w * q(pack.quad.points))))
    qvec = np.concatenate(coeffs)
    blk = pressure_gradient_block(packs, disc.params.rho[m], disc.fluctuations[m])
    scale = max(np.abs(blk).max(), 1.0)
    assert quad_form(blk, qvec) <= 1e-12 * scale


def test_pressure_gradient_vertex_jump_dense_oracle(rng):
    disc = discretization("cartesian", 0, 1, macro="vertex")
    m = next(i for i, p in enumerate(disc.macro.patches) if len(p) == 4)
    cells = disc.macro.patches[m]
    packs = [disc.packs[c] for c in cells]
    fluct = disc.fluctuations[m]
    rho = disc.params.rho[m]
    blk = pressure_gradient_block(packs, rho, fluct)

    qvec = rng.standard_normal(sum(p.nk for p in packs))
    got = quad_form(blk, qvec)
    assert got > 0.0

    # dense oracle: broken gradient point values, fluctuation pointwise
    npts = fluct.points.shape[0]
    want = 0.0
    for d in range(2):
        field = np.zeros(npts)
        col = 0
        for pack, rows in zip(packs, fluct.cell_slices):
            field[rows] = pack.grads[:, : pack.nk, d] @ qvec[col : col + pack.nk]
            col += pack.nk
        filtered = apply_fluctuation(fluct, field)
        want += rho * np.sum(fluct.weights * filtered**2)
    assert abs(got - want) <= 1e-11 * want


# PSD structure (hexagonal, one degree here; the acceptance suite sweeps k)


def test_blocks_symmetric_psd_hex():
    disc = discretization("hexagonal", 1, 1)
    worst = 0.0
    for cell in range(disc.mesh.n_cells):
        pack = disc.packs[cell]
        for blk in (local_viscous_block(pack, 1e-4), normal_jump_block(pack)):
            assert np.abs(blk - blk.T).max() <= 1e-12 * max(np.abs(blk).max(), 1e-30)
            ev = np.linalg.eigvalsh(0.5 * (blk + blk.T))
            worst = min(worst, ev.min() / max(np.abs(ev).max(), 1e-300))
    for m, cells in enumerate(disc.macro.patches):
        blk = lps_block([disc.packs[c] for c in cells], disc.params.tau[m],
                        disc.params.b_mean[m], disc.fluctuations[m])
        ev = np.linalg.eigvalsh(0.5 * (blk + blk.T))
        worst = min(worst, ev.min() / max(np.abs(ev).max(), 1e-300))
    assert worst >= -1e-11
