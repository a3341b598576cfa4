"""Quantitative gate for the whole package.

Each check prints exactly one PASS/FAIL line (visible with -s; for failing
checks the same line is the assertion message). Rate bands and tolerances
are fixed constants of the checks, not knobs.
"""

import os

import numpy as np
import pytest
from scipy.linalg import cho_solve

from hholps.analysis import coercivity_gap, compute_errors
from hholps.basis import monomial_exponents
from hholps.cases import get_case
from hholps.cli import StudyConfig, run_convergence_study
from hholps.forms import (
    OseenCoefficients,
    lps_block,
    normal_jump_block,
    pressure_gradient_block,
    viscous_stabilisation,
)
from hholps.operators import (
    divergence_reconstruction,
    gather_block,
    interpolate_cell,
    velocity_reconstruction,
)
from hholps.system import (
    Discretization,
    assemble,
    solve,
    solve_condensed,
    static_condensation,
)

from conftest import FAMILIES, discretization, mesh

EXTENDED = os.environ.get("HHOLPS_EXTENDED") == "1"


def _verdict(ok: bool, label: str, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(line, flush=True)
    return line


def _rate_band_failures(tmp_path, case, epsilon, families, ks):
    """Run 4-level studies and collect finest-pair rates outside [k+.25, k+.85]."""
    failures, summary = [], []
    for family in families:
        for k in ks:
            reports = run_convergence_study(
                StudyConfig(case=case, family=family, ks=(k,), levels=4,
                            epsilon=epsilon, out=str(tmp_path), plots=False)
            )
            rep = reports[-1]
            lo, hi = k + 0.25, k + 0.85
            summary.append(f"{family} k={k} LP {rep.rate_LP:.2f} supg {rep.rate_supg:.2f}")
            for name, rate in (("err_LP", rep.rate_LP), ("err_supg", rep.rate_supg)):
                if not lo <= rate <= hi:
                    failures.append(
                        f"{family} k={k} {name} rate {rate:.3f} outside [{lo:.2f}, {hi:.2f}]"
                    )
    return failures, summary


def test_rate_bands_smooth_case(tmp_path):
    failures, summary = _rate_band_failures(
        tmp_path, "smooth", 1e-8, ("triangular", "cartesian"), (0, 1)
    )
    ok = not failures
    line = _verdict(
        ok,
        "rate bands, smooth case (eps=1e-8, 4 levels, k in {0,1})",
        "; ".join(failures if failures else summary),
    )
    note = ""
    if failures and all("cartesian k=0 err_supg" in f for f in failures):
        note = (
            "  (known: on the axiparallel grid the k=0 advective error is"
            " superclose and err_supg converges near first order, above the"
            " band; the band is not widened to absorb it)"
        )
    assert ok, line + note


@pytest.mark.skipif(not EXTENDED, reason="set HHOLPS_EXTENDED=1 for degrees 2 and 3")
def test_rate_bands_smooth_case_extended_degrees(tmp_path):
    failures, summary = _rate_band_failures(
        tmp_path, "smooth", 1e-8, ("triangular", "cartesian"), (2, 3)
    )
    ok = not failures
    line = _verdict(
        ok,
        "rate bands, smooth case, extended degrees (k in {2,3}, non-gating)",
        "; ".join(failures if failures else summary),
    )
    if not ok:
        pytest.xfail(line)


def test_rate_band_boundary_layer_case(tmp_path):
    reports = run_convergence_study(
        StudyConfig(case="layer", family="cartesian", ks=(1,), levels=4,
                    epsilon=1e-2, out=str(tmp_path), plots=False)
    )
    rate = reports[-1].rate_LP
    ok = 1.25 <= rate <= 1.85
    line = _verdict(
        ok,
        "rate band, boundary-layer case (eps=1e-2, cartesian, k=1)",
        f"finest-pair rate_LP {rate:.3f}, target [1.25, 1.85]",
    )
    assert ok, line


def test_energy_identity_on_random_pairs(rng):
    worst = 0.0
    for family in FAMILIES:
        system = assemble(discretization(family, 2, 1))
        layout = system.disc.layout
        dm = system.dofmap
        for _ in range(50):
            vel = rng.standard_normal(layout.total)
            for f in system.disc.mesh.boundary_faces:
                vel[layout.face_slice(f)] = 0.0
            pres = rng.standard_normal(dm.multiplier - dm.pressure_start)
            worst = max(worst, coercivity_gap(system, vel, pres))
    ok = worst <= 1e-10
    line = _verdict(
        ok,
        "energy identity A(x,x) = |x|_eps^2 + |x|_b^2 + |x|_st^2",
        f"max relative gap {worst:.2e} over 150 random pairs, tol 1e-10",
    )
    assert ok, line


def _monomial_field(a, b, comp):
    def u(points, a=a, b=b, comp=comp):
        out = np.zeros((points.shape[0], 2))
        out[:, comp] = points[:, 0] ** a * points[:, 1] ** b
        return out

    return u


def _monomial_partial(points, a, b, axis):
    if axis == 0:
        if a == 0:
            return np.zeros(points.shape[0])
        return a * points[:, 0] ** (a - 1) * points[:, 1] ** b
    if b == 0:
        return np.zeros(points.shape[0])
    return b * points[:, 0] ** a * points[:, 1] ** (b - 1)


def test_operator_identities_and_global_divergence_mean(rng):
    from test_operators import eval_recon

    worst_recon = 0.0
    worst_div = 0.0
    for family in FAMILIES:
        for k in (0, 1, 2):
            disc = discretization(family, 1, k)
            for pack in disc.packs:
                vals_k = pack.vals[:, : pack.nk]
                w = pack.quad.weights
                pts = pack.quad.points
                for a, b in monomial_exponents(k + 1):
                    for comp in (0, 1):
                        field = _monomial_field(a, b, comp)
                        block = interpolate_cell(pack, field)
                        coeffs = velocity_reconstruction(pack, block)
                        got = eval_recon(pack, coeffs, pts)
                        worst_recon = max(worst_recon, np.abs(got - field(pts)).max())
                for a, b in monomial_exponents(k + 2):
                    for comp in (0, 1):
                        block = interpolate_cell(pack, _monomial_field(a, b, comp))
                        d = divergence_reconstruction(pack, block)
                        div_vals = _monomial_partial(pts, a, b, comp)
                        proj = cho_solve(pack.massk_cho, vals_k.T @ (w * div_vals))
                        diff = vals_k @ (d - proj)
                        worst_div = max(worst_div, float(np.sqrt(np.sum(w * diff**2))))

    # the reconstructed divergence of any member of the zero-boundary space
    # integrates to zero over the whole domain
    worst_mean = 0.0
    for family in FAMILIES:
        disc = discretization(family, 1, 1)
        for _ in range(20):
            vel = rng.standard_normal(disc.layout.total)
            for f in disc.mesh.boundary_faces:
                vel[disc.layout.face_slice(f)] = 0.0
            total = 0.0
            for c, pack in enumerate(disc.packs):
                block = gather_block(disc.layout, disc.mesh, c, vel)
                d = divergence_reconstruction(pack, block)
                total += float(pack.quad.weights @ (pack.vals[:, : pack.nk] @ d))
            worst_mean = max(worst_mean, abs(total))

    ok = worst_recon <= 1e-11 and worst_div <= 1e-10 and worst_mean <= 1e-11
    line = _verdict(
        ok,
        "operator identities (k in {0,1,2}, all families)",
        f"r(Iw)=w max {worst_recon:.2e} tol 1e-11; "
        f"D(Iu)=pi(div u) max {worst_div:.2e} tol 1e-10; "
        f"global mean of D max {worst_mean:.2e} tol 1e-11",
    )
    assert ok, line


def test_patch_solutions_reproduced(tmp_path):
    worst = 0.0
    for family in FAMILIES:
        for eps in (1.0, 1e-4):
            case = get_case("patch", epsilon=eps)
            disc = Discretization(mesh(family, 1), 1, case.coeffs)
            solution, info = solve(assemble(disc))
            assert info.residual <= 1e-9
            rep = compute_errors(disc, solution, case, level=1)
            worst = max(worst, rep.err_LP)
    ok = worst <= 1e-7
    line = _verdict(
        ok,
        "patch test, lifted boundary (u=(y,x), p=x+y-1, k=1)",
        f"max err_LP {worst:.2e} over all families x eps in {{1, 1e-4}}, tol 1e-7",
    )
    assert ok, line


def _sym_psd_stats(block):
    sym = 0.5 * (block + block.T)
    eigs = np.linalg.eigvalsh(sym)
    norm = float(np.abs(eigs).max()) if eigs.size else 0.0
    asym = float(np.abs(block - block.T).max())
    return asym, float(eigs.min()), norm


def test_stabilisation_block_structure():
    worst_ratio = 0.0  # most negative min eigenvalue, relative to block norm
    worst_asym = 0.0
    worst_bg_trivial = 0.0
    for k in (0, 1, 2):
        disc = discretization("hexagonal", 1, k)
        for m, cells in enumerate(disc.macro.patches):
            packs = [disc.packs[c] for c in cells]
            blocks = [
                viscous_stabilisation(packs[0]),
                normal_jump_block(packs[0]),
                lps_block(packs, disc.params.tau[m], disc.params.b_mean[m],
                          disc.fluctuations[m]),
            ]
            bg = pressure_gradient_block(packs, disc.params.rho[m],
                                         disc.fluctuations[m])
            worst_bg_trivial = max(worst_bg_trivial, float(np.abs(bg).max()))
            for blk in blocks:
                asym, mineig, norm = _sym_psd_stats(blk)
                if norm > 0.0:
                    worst_asym = max(worst_asym, asym / norm)
                    worst_ratio = min(worst_ratio, mineig / norm)
        # with overlapping patches the projection block is no longer zero and
        # carries the spectrum worth checking
        vdisc = discretization("hexagonal", 1, k, macro="vertex_patch")
        for m, cells in enumerate(vdisc.macro.patches):
            packs = [vdisc.packs[c] for c in cells]
            for blk in (
                lps_block(packs, vdisc.params.tau[m], vdisc.params.b_mean[m],
                          vdisc.fluctuations[m]),
                pressure_gradient_block(packs, vdisc.params.rho[m],
                                        vdisc.fluctuations[m]),
            ):
                asym, mineig, norm = _sym_psd_stats(blk)
                if norm > 0.0:
                    worst_asym = max(worst_asym, asym / norm)
                    worst_ratio = min(worst_ratio, mineig / norm)
    ok = worst_ratio >= -1e-11 and worst_asym <= 1e-11 and worst_bg_trivial <= 1e-10
    line = _verdict(
        ok,
        "stabilisation block structure (hexagonal level 1, k in {0,1,2})",
        f"min eig >= {worst_ratio:.2e} x norm (tol -1e-11); "
        f"asymmetry {worst_asym:.2e} x norm; "
        f"pressure-gradient block with single-cell patches max {worst_bg_trivial:.2e}, tol 1e-10",
    )
    assert ok, line


def test_direct_solver_robust_across_viscosities():
    worst_res = 0.0
    for eps in (1.0, 1e-4, 1e-8):
        for family in FAMILIES:
            solution, info = solve(assemble(discretization(family, 2, 1, epsilon=eps)))
            worst_res = max(worst_res, info.residual)

    worst_zero = 0.0
    for family in FAMILIES:
        coeffs = OseenCoefficients(
            epsilon=1e-4, sigma=1.0,
            b=lambda p: np.ones_like(np.asarray(p, dtype=float)), f=None)
        disc = Discretization(mesh(family, 2), 1, coeffs)
        solution, _ = solve(assemble(disc))
        worst_zero = max(
            worst_zero,
            float(np.abs(solution.velocity).max()),
            float(np.abs(solution.pressure).max()),
            abs(solution.multiplier),
        )
    ok = worst_res <= 1e-9 and worst_zero <= 1e-10
    line = _verdict(
        ok,
        "direct solve, eps in {1, 1e-4, 1e-8} (all families, k=1, level 2)",
        f"max relative residual {worst_res:.2e} tol 1e-9; "
        f"f=0 solution max {worst_zero:.2e} tol 1e-10",
    )
    assert ok, line


def test_static_condensation_equivalence():
    worst = 0.0
    case = get_case("smooth")
    for family in ("triangular", "cartesian"):
        disc = discretization(family, 2, 1)
        system = assemble(disc)
        full, _ = solve(system)
        cond, _ = solve_condensed(static_condensation(system))
        rep_f = compute_errors(disc, full, case, level=2)
        rep_c = compute_errors(disc, cond, case, level=2)
        for name in ("err_LP", "err_supg", "err_b", "err_eps", "err_st",
                     "err_p", "err_u_l2"):
            a, b = getattr(rep_f, name), getattr(rep_c, name)
            worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
    ok = worst <= 1e-9
    line = _verdict(
        ok,
        "static condensation equivalence (smooth case, k=1, level 2)",
        f"max relative disagreement {worst:.2e} across all reported norms, tol 1e-9",
    )
    assert ok, line
