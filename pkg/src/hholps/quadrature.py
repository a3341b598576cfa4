"""Quadrature on polygons and segments with prescribed polynomial exactness.

Polygon rules fan-triangulate from the area centroid and use a conical
product rule (Gauss-Jacobi in the collapsed direction) on each triangle, so
weights stay positive at every exactness degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .meshing import MeshValidationError, PolytopalMesh, _polygon_area_centroid


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n, 2), physical coordinates
    weights: np.ndarray  # (n,), sums to the measure
    exactness: int

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def _gauss_unit(n: int):
    """Legendre nodes/weights on [0, 1]."""
    t, w = roots_legendre(n)
    return (t + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _jacobi_unit(n: int):
    """Nodes/weights for integral over [0, 1] with weight (1 - v)."""
    t, w = roots_jacobi(n, 1.0, 0.0)
    return (t + 1.0) / 2.0, w / 4.0


@lru_cache(maxsize=None)
def _triangle_reference(degree: int):
    """Conical product rule on the unit triangle x, y >= 0, x + y <= 1."""
    n = max(1, (degree + 2) // 2)
    u, wu = _gauss_unit(n)
    v, wv = _jacobi_unit(n)
    xi = np.outer(u, 1.0 - v).ravel()
    eta = np.tile(v, n)
    w = np.outer(wu, wv).ravel()
    return xi, eta, w


def triangle_quadrature(v0, v1, v2, degree: int):
    """Points/weights exact to `degree` on the triangle (v0, v1, v2)."""
    xi, eta, w = _triangle_reference(degree)
    v0 = np.asarray(v0, dtype=float)
    e1 = np.asarray(v1, dtype=float) - v0
    e2 = np.asarray(v2, dtype=float) - v0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    pts = v0[None, :] + np.outer(xi, e1) + np.outer(eta, e2)
    return pts, w * abs(det)


def polygon_quadrature(vertices, degree: int, cell_id=None) -> QuadRule:
    """Fan rule from the area centroid; requires star-shapedness w.r.t. it."""
    vertices = np.asarray(vertices, dtype=float)
    area, centroid = _polygon_area_centroid(vertices)
    n = vertices.shape[0]
    pts = []
    wts = []
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        cross = (a[0] - centroid[0]) * (b[1] - centroid[1]) - (
            a[1] - centroid[1]
        ) * (b[0] - centroid[0])
        if cross <= 0.0:
            label = f"cell {cell_id}" if cell_id is not None else "polygon"
            raise MeshValidationError(
                f"{label} is not star-shaped with respect to its centroid"
            )
        p, w = triangle_quadrature(centroid, a, b, degree)
        pts.append(p)
        wts.append(w)
    return QuadRule(np.vstack(pts), np.concatenate(wts), degree)


def cell_quadrature(mesh: PolytopalMesh, cell: int, degree: int) -> QuadRule:
    return polygon_quadrature(mesh.cell_vertices(cell), degree, cell_id=cell)


def segment_quadrature(p0, p1, degree: int) -> QuadRule:
    """Gauss-Legendre rule along the segment from p0 to p1."""
    n = max(1, (degree + 2) // 2)
    s, w = _gauss_unit(n)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    pts = p0[None, :] + np.outer(s, p1 - p0)
    length = float(np.hypot(*(p1 - p0)))
    return QuadRule(pts, w * length, degree)


def face_quadrature(mesh: PolytopalMesh, face: int, degree: int) -> QuadRule:
    a, b = mesh.faces[face]
    return segment_quadrature(mesh.vertices[a], mesh.vertices[b], degree)
