"""Manufactured Oseen solutions with hand-written derivative callbacks.

The two flow examples share one structure: u = curl(psi) for a separable
stream function psi(x, y) = g(x) g(y), which makes div u = 0 exact and turns
every derivative of u into products of derivatives of g.  The forcing term
is derived from the callbacks, never differentiated numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .forms import OseenCoefficients


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    coeffs: OseenCoefficients
    velocity: Callable  # (n, 2) points -> (n, 2)
    velocity_grad: Callable  # -> (n, 2, 2), entry [p, i, j] = du_i/dx_j
    velocity_lap: Callable  # -> (n, 2)
    pressure: Callable  # -> (n,)
    pressure_grad: Callable  # -> (n, 2)


def _xy(points):
    points = np.asarray(points, dtype=float)
    return points[:, 0], points[:, 1]


def _constant_b(points):
    points = np.asarray(points, dtype=float)
    return np.ones_like(points)


def _constant_b_grad(points):
    points = np.asarray(points, dtype=float)
    return np.zeros((points.shape[0], 2, 2))


def _assemble_case(
    name, epsilon, sigma, velocity, velocity_grad, velocity_lap, pressure, pressure_grad, lifted
) -> ManufacturedCase:
    def source(points):
        u = velocity(points)
        jac = velocity_grad(points)
        lap = velocity_lap(points)
        pg = pressure_grad(points)
        conv = jac[:, :, 0] + jac[:, :, 1]  # (b . grad) u with b = (1, 1)
        return -epsilon * lap + conv + sigma * u + pg

    coeffs = OseenCoefficients(
        epsilon=epsilon,
        sigma=sigma,
        b=_constant_b,
        b_grad=_constant_b_grad,
        f=source,
        dirichlet=velocity if lifted else None,
    )
    return ManufacturedCase(
        name, coeffs, velocity, velocity_grad, velocity_lap, pressure, pressure_grad
    )


def _stream_case(name, g, gp, gpp, gppp, pressure, pressure_grad, epsilon, sigma):
    """Case with u1 = g(x) g'(y), u2 = -g'(x) g(y)."""

    def velocity(points):
        x, y = _xy(points)
        return np.stack([g(x) * gp(y), -gp(x) * g(y)], axis=1)

    def velocity_grad(points):
        x, y = _xy(points)
        jac = np.empty((x.size, 2, 2))
        jac[:, 0, 0] = gp(x) * gp(y)
        jac[:, 0, 1] = g(x) * gpp(y)
        jac[:, 1, 0] = -gpp(x) * g(y)
        jac[:, 1, 1] = -gp(x) * gp(y)
        return jac

    def velocity_lap(points):
        x, y = _xy(points)
        return np.stack(
            [gpp(x) * gp(y) + g(x) * gppp(y), -(gppp(x) * g(y) + gp(x) * gpp(y))],
            axis=1,
        )

    return _assemble_case(
        name, epsilon, sigma, velocity, velocity_grad, velocity_lap,
        pressure, pressure_grad, lifted=False,
    )


def case_smooth(epsilon: float = 1e-8, sigma: float = 1.0) -> ManufacturedCase:
    """Polynomial vortex with a trigonometric zero-mean pressure."""

    def g(t):
        return t**4 - 2 * t**3 + t**2

    def gp(t):
        return 4 * t**3 - 6 * t**2 + 2 * t

    def gpp(t):
        return 12 * t**2 - 12 * t + 2

    def gppp(t):
        return 24 * t - 12

    shift = 2 * math.sin(1.0) * (1.0 - math.cos(1.0))

    def pressure(points):
        x, y = _xy(points)
        return 2 * np.cos(x) * np.sin(y) - shift

    def pressure_grad(points):
        x, y = _xy(points)
        return np.stack([-2 * np.sin(x) * np.sin(y), 2 * np.cos(x) * np.cos(y)], axis=1)

    return _stream_case("smooth", g, gp, gpp, gppp, pressure, pressure_grad, epsilon, sigma)


def case_boundary_layer(epsilon: float = 1e-2, sigma: float = 1.0) -> ManufacturedCase:
    """Vortex with exponential layers at x=1 and y=1, width set by epsilon."""
    lam = 1.0 / (2.0 * math.sqrt(epsilon))

    def a(t):
        return np.expm1(lam * (t - 1.0))

    def g(t):
        return t**2 * a(t) ** 2

    def gp(t):
        at = a(t)
        ap = lam * (at + 1.0)
        return 2 * t * at**2 + 2 * t**2 * at * ap

    def gpp(t):
        at = a(t)
        ap = lam * (at + 1.0)
        app = lam * ap
        return 2 * at**2 + 8 * t * at * ap + 2 * t**2 * (ap**2 + at * app)

    def gppp(t):
        at = a(t)
        ap = lam * (at + 1.0)
        app = lam * ap
        appp = lam * app
        return (
            12 * at * ap
            + 12 * t * (ap**2 + at * app)
            + 2 * t**2 * (3 * ap * app + at * appp)
        )

    shift = (math.e - 1.0) ** 2

    def pressure(points):
        x, y = _xy(points)
        return np.exp(x + y) - shift

    def pressure_grad(points):
        x, y = _xy(points)
        e = np.exp(x + y)
        return np.stack([e, e], axis=1)

    return _stream_case(
        "boundary_layer", g, gp, gpp, gppp, pressure, pressure_grad, epsilon, sigma
    )


def case_patch_test(epsilon: float = 1.0, sigma: float = 1.0) -> ManufacturedCase:
    """Linear fields, reproduced exactly by the scheme for k >= 1.

    Boundary data is the field itself, so the run exercises the lifted
    Dirichlet path.
    """

    def velocity(points):
        x, y = _xy(points)
        return np.stack([y, x], axis=1)

    def velocity_grad(points):
        x, _ = _xy(points)
        jac = np.zeros((x.size, 2, 2))
        jac[:, 0, 1] = 1.0
        jac[:, 1, 0] = 1.0
        return jac

    def velocity_lap(points):
        points = np.asarray(points, dtype=float)
        return np.zeros_like(points)

    def pressure(points):
        x, y = _xy(points)
        return x + y - 1.0

    def pressure_grad(points):
        points = np.asarray(points, dtype=float)
        return np.ones_like(points)

    return _assemble_case(
        "patch_test", epsilon, sigma, velocity, velocity_grad, velocity_lap,
        pressure, pressure_grad, lifted=True,
    )


_DEFAULT_EPSILON = {"smooth": 1e-8, "layer": 1e-2, "patch": 1.0}


def get_case(name: str, epsilon: float | None = None, sigma: float = 1.0) -> ManufacturedCase:
    """Case by CLI name: smooth, layer, or patch."""
    if name not in _DEFAULT_EPSILON:
        raise ValueError(f"unknown case '{name}'; expected smooth, layer, or patch")
    eps = _DEFAULT_EPSILON[name] if epsilon is None else epsilon
    if name == "smooth":
        return case_smooth(eps, sigma)
    if name == "layer":
        return case_boundary_layer(eps, sigma)
    return case_patch_test(eps, sigma)


def pde_residual(case: ManufacturedCase, points) -> np.ndarray:
    """Pointwise magnitude of -eps*Lap(u) + (b.grad)u + sigma*u + grad p - f."""
    points = np.asarray(points, dtype=float)
    coeffs = case.coeffs
    u = case.velocity(points)
    jac = case.velocity_grad(points)
    b = coeffs.b_values(points)
    conv = np.einsum("pij,pj->pi", jac, b)
    res = (
        -coeffs.epsilon * case.velocity_lap(points)
        + conv
        + coeffs.sigma * u
        + case.pressure_grad(points)
        - coeffs.f_values(points)
    )
    return np.hypot(res[:, 0], res[:, 1])
