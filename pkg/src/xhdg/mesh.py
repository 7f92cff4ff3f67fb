"""Structured background meshes of a rectangle.

Cells are stored counter-clockwise.  Local edge ``k`` of a cell joins local
vertices ``k`` and ``k + 1``.  Every face is stored once, oriented as seen
from its *left* cell, so the stored normal is the outward normal of that cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 2)
    cells: np.ndarray  # (C, 3) or (C, 4), counter-clockwise
    faces: np.ndarray  # (F, 2) vertex pairs, left-cell orientation
    face_cells: np.ndarray  # (F, 2) left, right (-1 on the boundary)
    cell_faces: np.ndarray  # (C, k) face id of local edge k
    domain: tuple[float, float, float, float]
    cell_type: str
    n: int = 0
    cell_diameter: np.ndarray = field(init=False, repr=False)
    cell_area: np.ndarray = field(init=False, repr=False)
    cell_centroid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xy = self.vertices[self.cells]
        nv = xy.shape[1]
        diam = np.zeros(len(self.cells))
        for i in range(nv):
            for j in range(i + 1, nv):
                diam = np.maximum(diam, np.linalg.norm(xy[:, i] - xy[:, j], axis=1))
        nxt = np.roll(xy, -1, axis=1)
        cross = xy[..., 0] * nxt[..., 1] - nxt[..., 0] * xy[..., 1]
        area = 0.5 * cross.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cx = ((xy[..., 0] + nxt[..., 0]) * cross).sum(axis=1) / (6 * area)
            cy = ((xy[..., 1] + nxt[..., 1]) * cross).sum(axis=1) / (6 * area)
        object.__setattr__(self, "cell_diameter", diam)
        object.__setattr__(self, "cell_area", area)
        object.__setattr__(self, "cell_centroid", np.column_stack([cx, cy]))
        for name in ("vertices", "cells", "faces", "face_cells", "cell_faces",
                     "cell_diameter", "cell_area", "cell_centroid"):
            getattr(self, name).setflags(write=False)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    @property
    def boundary_faces(self) -> np.ndarray:
        return self.face_cells[:, 1] < 0

    @property
    def face_length(self) -> np.ndarray:
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def face_normals(self) -> np.ndarray:
        """Unit outward normals of the left cell."""
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        return np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

    def cell_vertices(self, cell: int) -> np.ndarray:
        return self.vertices[self.cells[cell]]


def _connectivity(cells: np.ndarray):
    ncell, nv = cells.shape
    edges = np.stack([cells, np.roll(cells, -1, axis=1)], axis=-1).reshape(-1, 2)
    key = np.sort(edges, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    sk = key[order]
    new = np.ones(len(sk), dtype=bool)
    new[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    group = np.cumsum(new) - 1
    nface = group[-1] + 1
    counts = np.bincount(group, minlength=nface)
    if np.any(counts > 2):
        raise MeshError("non-manifold edge: more than two incident cells")

    face_of_edge = np.empty(len(edges), dtype=np.int64)
    face_of_edge[order] = group
    # lexsort is stable, so the first occurrence (lowest cell id) is the left cell
    starts = np.flatnonzero(new)
    first = order[starts]
    second = np.full(nface, -1, dtype=np.int64)
    twice = counts == 2
    second[twice] = order[starts[twice] + 1]
    faces = edges[first]
    left = first // nv
    right = np.where(second >= 0, second // nv, -1)
    return faces, np.column_stack([left, right]), face_of_edge.reshape(ncell, nv)


def from_arrays(vertices, cells, domain=None, cell_type=None, n=0) -> Mesh:
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if cell_type is None:
        cell_type = {3: "triangle", 4: "rectangle"}.get(cells.shape[1], "polygon")
    if domain is None:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        domain = (lo[0], hi[0], lo[1], hi[1])
    faces, face_cells, cell_faces = _connectivity(cells)
    return Mesh(vertices, cells, faces, face_cells, cell_faces,
                tuple(float(v) for v in domain), cell_type, n)


def build_structured(domain, n: int, cell_type: str = "triangle") -> Mesh:
    """Uniform ``n x n`` mesh of the rectangle ``domain = (a, b, c, d)``.

    ``cell_type`` is ``"triangle"`` (each square split along its
    bottom-left to top-right diagonal) or ``"rectangle"``.
    """
    a, b, c, d = (float(v) for v in domain)
    if not (b > a and d > c):
        raise MeshError(f"degenerate domain [{a}, {b}] x [{c}, {d}]")
    if int(n) < 1:
        raise MeshError(f"need at least one subdivision, got n={n}")
    n = int(n)
    cell_type = {"tri": "triangle", "rect": "rectangle", "quad": "rectangle"}.get(cell_type, cell_type)
    if cell_type not in ("triangle", "rectangle"):
        raise MeshError(f"unknown cell type {cell_type!r}")

    xs = np.linspace(a, b, n + 1)
    ys = np.linspace(c, d, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    if cell_type == "rectangle":
        cells = np.column_stack([v00, v10, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_arrays(vertices, cells, (a, b, c, d), cell_type, n)


@dataclass
class ShapeReport:
    theta_star: float
    l_star: float
    violations: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_shape_regularity(mesh: Mesh, tol: float = 1e-12) -> ShapeReport:
    """Largest constants for which the star-shapedness and vertex-separation
    conditions hold, taken as minima over cells.

    The star-shapedness radius uses the inscribed circle: the incentre for
    triangles and the centroid (distance to the nearest edge line) otherwise.
    """
    xy = mesh.vertices[mesh.cells]
    nxt = np.roll(xy, -1, axis=1)
    edge = nxt - xy
    elen = np.linalg.norm(edge, axis=2)
    h = mesh.cell_diameter
    area = mesh.cell_area

    nv = xy.shape[1]
    dmin = np.full(len(xy), np.inf)
    for i in range(nv):
        for j in range(i + 1, nv):
            dmin = np.minimum(dmin, np.linalg.norm(xy[:, i] - xy[:, j], axis=1))

    with np.errstate(invalid="ignore", divide="ignore"):
        if nv == 3:
            radius = 2.0 * area / elen.sum(axis=1)
        else:
            rel = mesh.cell_centroid[:, None, :] - xy
            dist = (edge[..., 0] * rel[..., 1] - edge[..., 1] * rel[..., 0]) / elen
            radius = dist.min(axis=2) if dist.ndim == 3 else dist.min(axis=1)
        theta = np.where(h > 0, radius / h, 0.0)
        lrat = np.where(h > 0, dmin / h, 0.0)
    theta = np.nan_to_num(theta, nan=0.0)
    lrat = np.nan_to_num(lrat, nan=0.0)
    bad = np.flatnonzero((theta <= tol) | (lrat <= tol) | ~(area > tol * np.maximum(h, tol) ** 2))
    return ShapeReport(float(theta.min()), float(lrat.min()), bad.tolist())
