"""Polygonal meshes on the unit square: generators, JSON I/O, macro patches.

Conventions used throughout the package:

* cells are counter-clockwise vertex loops of simple polygons;
* each face stores the vertex pair in the owner cell's traversal order, so
  the stored unit normal points out of the owner; the neighbor side uses the
  negated normal;
* face ids are shared between the two adjacent cells, which makes face
  quadrature and face polynomial spaces single-valued across the interface.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed into vertices and cells."""


class MeshValidationError(ValueError):
    """Raised when a cell is not a CCW-oriented simple polygon."""


@dataclass(frozen=True)
class PolytopalMesh:
    """Immutable polygonal mesh with precomputed face and cell geometry."""

    vertices: np.ndarray  # (nv, 2)
    cells: tuple  # tuple of vertex-id tuples, CCW
    faces: np.ndarray  # (nf, 2) vertex ids in owner traversal order
    cell_faces: tuple  # tuple of face-id tuples, aligned with cell edges
    face_owner: np.ndarray  # (nf,)
    face_neighbor: np.ndarray  # (nf,), -1 on the boundary
    cell_measures: np.ndarray
    cell_centroids: np.ndarray
    cell_diameters: np.ndarray
    face_measures: np.ndarray
    face_midpoints: np.ndarray
    face_tangents: np.ndarray  # unit, owner traversal direction
    face_normals: np.ndarray  # unit, outward for the owner
    regularity: float  # measured rho with rho^2 * h_T <= h_F on every cell

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor < 0)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor >= 0)

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters.max())

    def face_sign(self, cell: int, face: int) -> float:
        """+1 when `cell` owns `face`, -1 when it is the neighbor."""
        if self.face_owner[face] == cell:
            return 1.0
        if self.face_neighbor[face] == cell:
            return -1.0
        raise ValueError(f"face {face} is not on cell {cell}")

    def outward_normal(self, cell: int, face: int) -> np.ndarray:
        return self.face_sign(cell, face) * self.face_normals[face]

    def cell_vertices(self, cell: int) -> np.ndarray:
        return self.vertices[list(self.cells[cell])]


def _polygon_area_centroid(pts: np.ndarray):
    x = pts[:, 0]
    y = pts[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    area2 = cross.sum()
    area = 0.5 * area2
    if abs(area2) < 1e-300:
        return area, pts.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (3.0 * area2)
    cy = ((y + yn) * cross).sum() / (3.0 * area2)
    return area, np.array([cx, cy])


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(p0, p1, q0, q1, scale) -> bool:
    """Proper or touching intersection of two closed segments."""
    tol = 1e-12 * scale * scale
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol
            and min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol
        )

    if abs(d1) <= tol and on_segment(q0, q1, p0):
        return True
    if abs(d2) <= tol and on_segment(q0, q1, p1):
        return True
    if abs(d3) <= tol and on_segment(p0, p1, q0):
        return True
    if abs(d4) <= tol and on_segment(p0, p1, q1):
        return True
    return False


def _validate_cell(cell_id: int, loop, nv: int, vertices: np.ndarray) -> None:
    if len(loop) < 3:
        raise MeshValidationError(f"cell {cell_id} has fewer than 3 vertices")
    if len(set(loop)) != len(loop):
        raise MeshValidationError(f"cell {cell_id} repeats a vertex")
    for v in loop:
        if not 0 <= v < nv:
            raise MeshValidationError(f"cell {cell_id} references unknown vertex {v}")
    pts = vertices[list(loop)]
    area, _ = _polygon_area_centroid(pts)
    diam = _loop_diameter(pts)
    if area <= 1e-14 * diam * diam:
        raise MeshValidationError(
            f"cell {cell_id} is not counter-clockwise or has nonpositive area"
        )
    # simplicity: only consecutive edges may touch, and only at the shared vertex
    n = len(loop)
    for i in range(n):
        p0, p1 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            q0, q1 = pts[j], pts[(j + 1) % n]
            if _segments_cross(p0, p1, q0, q1, diam):
                raise MeshValidationError(
                    f"cell {cell_id} is self-intersecting (edges {i} and {j})"
                )


def _loop_diameter(pts: np.ndarray) -> float:
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def mesh_from_arrays(vertices, cells) -> PolytopalMesh:
    """Build a validated mesh from vertex coordinates and CCW vertex loops.

    Faces are deduplicated between neighboring cells; the second traversal of
    a shared edge must run opposite to the first, which is exactly the
    orientation consistency of two CCW cells.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshFormatError("vertices must be an (n, 2) array")
    loops = tuple(tuple(int(v) for v in c) for c in cells)
    nv = vertices.shape[0]
    for cid, loop in enumerate(loops):
        _validate_cell(cid, loop, nv, vertices)

    face_of = {}
    faces = []
    owner = []
    neighbor = []
    cell_faces = []
    for cid, loop in enumerate(loops):
        ids = []
        n = len(loop)
        for i in range(n):
            a, b = loop[i], loop[(i + 1) % n]
            key = (a, b) if a < b else (b, a)
            if key not in face_of:
                fid = len(faces)
                face_of[key] = fid
                faces.append((a, b))
                owner.append(cid)
                neighbor.append(-1)
            else:
                fid = face_of[key]
                if neighbor[fid] >= 0:
                    raise MeshValidationError(
                        f"edge {key} is shared by more than two cells"
                    )
                if faces[fid] != (b, a):
                    raise MeshValidationError(
                        f"cells {owner[fid]} and {cid} traverse edge {key} "
                        "in the same direction"
                    )
                neighbor[fid] = cid
            ids.append(fid)
        cell_faces.append(tuple(ids))

    faces = np.array(faces, dtype=np.int64).reshape(-1, 2)
    face_owner = np.array(owner, dtype=np.int64)
    face_neighbor = np.array(neighbor, dtype=np.int64)

    nc = len(loops)
    cell_measures = np.empty(nc)
    cell_centroids = np.empty((nc, 2))
    cell_diameters = np.empty(nc)
    for cid, loop in enumerate(loops):
        pts = vertices[list(loop)]
        area, centroid = _polygon_area_centroid(pts)
        cell_measures[cid] = area
        cell_centroids[cid] = centroid
        cell_diameters[cid] = _loop_diameter(pts)

    p0 = vertices[faces[:, 0]]
    p1 = vertices[faces[:, 1]]
    d = p1 - p0
    face_measures = np.sqrt((d**2).sum(axis=1))
    if np.any(face_measures <= 0):
        bad = int(np.argmin(face_measures))
        raise MeshValidationError(f"face {bad} has zero length")
    face_midpoints = 0.5 * (p0 + p1)
    face_tangents = d / face_measures[:, None]
    face_normals = np.stack([face_tangents[:, 1], -face_tangents[:, 0]], axis=1)

    rho = 1.0
    for cid, fids in enumerate(cell_faces):
        h_t = cell_diameters[cid]
        h_f = face_measures[list(fids)].min()
        rho = min(rho, math.sqrt(h_f / h_t))

    return PolytopalMesh(
        vertices=vertices,
        cells=loops,
        faces=faces,
        cell_faces=tuple(cell_faces),
        face_owner=face_owner,
        face_neighbor=face_neighbor,
        cell_measures=cell_measures,
        cell_centroids=cell_centroids,
        cell_diameters=cell_diameters,
        face_measures=face_measures,
        face_midpoints=face_midpoints,
        face_tangents=face_tangents,
        face_normals=face_normals,
        regularity=rho,
    )


def _cartesian_arrays(n: int):
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([[x, y] for y in xs for x in xs])
    vid = lambda i, j: j * (n + 1) + i
    cells = []
    for j in range(n):
        for i in range(n):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return verts, cells


def _triangular_arrays(n: int):
    verts, squares = _cartesian_arrays(n)
    cells = []
    for v00, v10, v11, v01 in squares:
        # split along the (i, j) -> (i+1, j+1) diagonal
        cells.append((v00, v10, v11))
        cells.append((v00, v11, v01))
    return verts, cells


def _hexagonal_arrays(m: int):
    """Stretched-hexagon tiling of the unit square on an integer lattice.

    Hexagon centers sit at lattice coordinates (2i, 3j) for even rows and
    (2i+1, 3j) for odd rows, with x scaled by 1/(2m) and y by 1/(3J). A full
    hexagon has corners (0,+-2), (+-1,+-1) relative to its center. Rows at the
    bottom/top keep the half of each hexagon inside the square (pentagons,
    corner quads); even-row end cells keep their right/left half (quads).
    Odd-row end hexagons already have a full edge on the boundary, so no cell
    is ever clipped through a face: every vertex is a lattice point, shared
    vertices coincide bitwise, and card(F_T) <= 6.
    """
    J = max(2, round(2 * m / math.sqrt(3)))
    top = 3 * J
    vid = {}
    verts = []

    def v(ix, iy):
        key = (ix, iy)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((ix / (2 * m), iy / top))
        return vid[key]

    cells = []

    def add(rel, xc, yc):
        cells.append(tuple(v(xc + dx, yc + dy) for dx, dy in rel))

    hexagon = [(0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1), (1, 1)]
    bottom_pent = [(0, 2), (-1, 1), (-1, 0), (1, 0), (1, 1)]
    top_pent = [(0, -2), (1, -1), (1, 0), (-1, 0), (-1, -1)]
    left_quad = [(0, 2), (0, -2), (1, -1), (1, 1)]
    right_quad = [(0, -2), (0, 2), (-1, 1), (-1, -1)]
    corner_bl = [(0, 0), (1, 0), (1, 1), (0, 2)]
    corner_br = [(-1, 0), (0, 0), (0, 2), (-1, 1)]
    corner_tl = [(0, -2), (1, -1), (1, 0), (0, 0)]
    corner_tr = [(0, -2), (0, 0), (-1, 0), (-1, -1)]

    for j in range(J + 1):
        yc = 3 * j
        if j % 2 == 0:
            for i in range(m + 1):
                xc = 2 * i
                at_left = i == 0
                at_right = i == m
                if j == 0:
                    rel = corner_bl if at_left else corner_br if at_right else bottom_pent
                elif j == J:
                    rel = corner_tl if at_left else corner_tr if at_right else top_pent
                else:
                    rel = left_quad if at_left else right_quad if at_right else hexagon
                add(rel, xc, yc)
        else:
            for i in range(m):
                xc = 2 * i + 1
                add(top_pent if j == J else hexagon, xc, yc)

    return np.array(verts), cells


def generate_mesh(family: str, level: int) -> PolytopalMesh:
    """Structured mesh of the unit square; the mesh size halves per level."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    n = 2 ** (level + 1)
    if family == "cartesian":
        verts, cells = _cartesian_arrays(n)
    elif family == "triangular":
        verts, cells = _triangular_arrays(n)
    elif family == "hexagonal":
        verts, cells = _hexagonal_arrays(n)
    else:
        raise ValueError(f"unknown mesh family {family!r}")
    return mesh_from_arrays(verts, cells)


def load_mesh(path) -> PolytopalMesh:
    """Read a mesh from the JSON polygon format (vertices + CCW cells)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshFormatError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}"
            ) from None
    if not isinstance(data, dict):
        raise MeshFormatError(f"{path}: top level must be an object")
    for field in ("vertices", "cells"):
        if field not in data:
            raise MeshFormatError(f"{path}: missing field '{field}'")
    raw_vertices = data["vertices"]
    if not isinstance(raw_vertices, list):
        raise MeshFormatError(f"{path}: field 'vertices' must be a list")
    for i, entry in enumerate(raw_vertices):
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not all(isinstance(c, (int, float)) for c in entry)
        ):
            raise MeshFormatError(
                f"{path}: field 'vertices[{i}]' must be a pair of numbers"
            )
    raw_cells = data["cells"]
    if not isinstance(raw_cells, list):
        raise MeshFormatError(f"{path}: field 'cells' must be a list")
    for i, entry in enumerate(raw_cells):
        if not isinstance(entry, list) or not all(isinstance(v, int) for v in entry):
            raise MeshFormatError(
                f"{path}: field 'cells[{i}]' must be a list of vertex ids"
            )
    return mesh_from_arrays(np.array(raw_vertices, dtype=float), raw_cells)


def canonical_form(mesh: PolytopalMesh) -> dict:
    """Serializable form with each cell loop rotated to start at its least vertex."""
    cells = []
    for loop in mesh.cells:
        k = loop.index(min(loop))
        cells.append(list(loop[k:] + loop[:k]))
    return {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": cells,
    }


def save_mesh(mesh: PolytopalMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(canonical_form(mesh), fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True)
class MacroDecomposition:
    """Cover of the mesh by (possibly overlapping) patches of cells."""

    mode: str
    patches: tuple  # tuple of cell-id tuples
    patch_diameters: np.ndarray
    cell_patches: tuple  # per cell: patch ids containing it
    overlap_count: int  # max number of patches containing any single cell
    stretch: float  # max over T in M of h_M / h_T

    @property
    def n_patches(self) -> int:
        return len(self.patches)


def _patch_geometry(mesh: PolytopalMesh, members) -> float:
    vids = sorted({v for cid in members for v in mesh.cells[cid]})
    return _loop_diameter(mesh.vertices[vids])


def build_macro_decomposition(mesh: PolytopalMesh, mode: str) -> MacroDecomposition:
    """One patch per cell (trivial) or per interior vertex (vertex_patch).

    In vertex_patch mode a cell with no interior vertex (possible in coarse
    corners) gets a singleton fallback patch so the patches always cover the
    mesh.
    """
    if mode == "trivial":
        patches = tuple((cid,) for cid in range(mesh.n_cells))
    elif mode in ("vertex", "vertex_patch"):
        boundary_vertices = set()
        for f in mesh.boundary_faces:
            boundary_vertices.update(mesh.faces[f])
        incident = {}
        for cid, loop in enumerate(mesh.cells):
            for v in loop:
                if v not in boundary_vertices:
                    incident.setdefault(v, []).append(cid)
        patches = [tuple(sorted(cids)) for _, cids in sorted(incident.items())]
        covered = {cid for p in patches for cid in p}
        for cid in range(mesh.n_cells):
            if cid not in covered:
                patches.append((cid,))
        patches = tuple(patches)
    else:
        raise ValueError(f"unknown macro mode {mode!r}")

    cell_patches = [[] for _ in range(mesh.n_cells)]
    for pid, members in enumerate(patches):
        for cid in members:
            cell_patches[cid].append(pid)

    diameters = np.array([_patch_geometry(mesh, members) for members in patches])

    overlap = max((len(pids) for pids in cell_patches), default=0)

    stretch = 0.0
    for pid, members in enumerate(patches):
        for cid in members:
            stretch = max(stretch, diameters[pid] / mesh.cell_diameters[cid])

    return MacroDecomposition(
        mode=mode,
        patches=patches,
        patch_diameters=diameters,
        cell_patches=tuple(tuple(p) for p in cell_patches),
        overlap_count=overlap,
        stretch=stretch,
    )
