"""Level-set interfaces and cut-cell geometry.

Sign convention: ``phi > 0`` in subdomain 1, ``phi < 0`` in subdomain 2, and
the interface normal ``n = -grad(phi) / |grad(phi)|`` points from 1 into 2.

The curved piece of the interface inside a cut cell is replaced by its chord
everywhere (geometry, quadrature, normals).

Vertices with ``|phi| < snap * h`` are treated as lying *on* the interface.
Such a vertex belongs to both sub-polygons of a cut cell and never produces a
zero-length face piece; a face with both end points on the interface between
cells of opposite sides is an interface segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

import numpy as np

from .mesh import Mesh
from .quadrature import fan_triangulate


class AssumptionViolation(RuntimeError):
    """The interface is not resolved by the mesh (one crossing per edge, two
    per cell).  Refining the mesh usually helps."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = list(cells)


class CellClass(IntEnum):
    CUT = 0
    PURE1 = 1
    PURE2 = 2


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelSet:
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]  # returns (2, ...)
    affine: bool = False
    name: str = "levelset"

    def __call__(self, x, y):
        return self.phi(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def normal(self, x, y) -> np.ndarray:
        g = np.asarray(self.grad(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)
        return -g / np.linalg.norm(g, axis=0)

    def transformed(self, matrix=None, offset=(0.0, 0.0)) -> "LevelSet":
        """Level set of the image of the zero set under ``x -> A x + b``."""
        A = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
        b = np.asarray(offset, dtype=float)
        Ainv = np.linalg.inv(A)
        phi0, grad0 = self.phi, self.grad

        def pull(x, y):
            dx, dy = x - b[0], y - b[1]
            return Ainv[0, 0] * dx + Ainv[0, 1] * dy, Ainv[1, 0] * dx + Ainv[1, 1] * dy

        def phi(x, y):
            return phi0(*pull(x, y))

        def grad(x, y):
            g = np.asarray(grad0(*pull(x, y)))
            return np.stack([Ainv[0, 0] * g[0] + Ainv[1, 0] * g[1],
                             Ainv[0, 1] * g[0] + Ainv[1, 1] * g[1]])

        return LevelSet(phi, grad, self.affine, self.name)

    def translated(self, dx: float, dy: float) -> "LevelSet":
        return self.transformed(None, (dx, dy))


def circle(center=(0.0, 0.0), radius=1.0) -> LevelSet:
    """Signed distance to a circle, positive outside."""
    cx, cy = (float(c) for c in center)
    r0 = float(radius)

    def phi(x, y):
        return np.hypot(x - cx, y - cy) - r0

    def grad(x, y):
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        r = np.where(r == 0.0, 1.0, r)
        return np.stack([dx / r, dy / r])

    return LevelSet(phi, grad, False, f"circle({cx:g},{cy:g},{r0:g})")


def halfplane(a: float, b: float, c: float) -> LevelSet:
    """``phi = a x + b y + c``."""
    a, b, c = float(a), float(b), float(c)
    if a == 0.0 and b == 0.0:
        raise ValueError("halfplane needs a nonzero normal (a, b)")

    def phi(x, y):
        return a * x + b * y + c

    def grad(x, y):
        ones = np.ones_like(np.asarray(x, dtype=float) + np.asarray(y, dtype=float))
        return np.stack([a * ones, b * ones])

    return LevelSet(phi, grad, True, f"halfplane({a:g},{b:g},{c:g})")


def five_star(r0=np.sqrt(3.0) / 4.0, amplitude=0.1, petals=5, phase=np.pi / 2) -> LevelSet:
    """``rho(r, theta) = r - r0 - amplitude * sin(petals * theta + phase)``."""

    def phi(x, y):
        return np.hypot(x, y) - r0 - amplitude * np.sin(petals * np.arctan2(y, x) + phase)

    def grad(x, y):
        r = np.hypot(x, y)
        r = np.where(r == 0.0, 1.0, r)
        th = np.arctan2(y, x)
        dth = -amplitude * petals * np.cos(petals * th + phase)
        # grad = e_r + (d rho / d theta) / r * e_theta
        ex, ey = x / r, y / r
        return np.stack([ex - dth / r * ey, ey + dth / r * ex])

    return LevelSet(phi, grad, False, "five_star")


def by_name(name: str, **params) -> LevelSet:
    builders = {"circle": circle, "halfplane": halfplane, "five_star": five_star}
    if name not in builders:
        raise ValueError(f"unknown level set {name!r}; choose from {sorted(builders)}")
    return builders[name](**params)


# ---------------------------------------------------------------------------
# vertex status, classification, edge intersections
# ---------------------------------------------------------------------------


def vertex_status(values: np.ndarray, tol) -> np.ndarray:
    """+1 / -1 for strict sides, 0 for vertices on the interface."""
    values = np.asarray(values, dtype=float)
    st = np.sign(values).astype(np.int8)
    st[np.abs(values) < tol] = 0
    return st


def _classify_status(st: np.ndarray) -> np.ndarray:
    st = np.atleast_2d(st)
    pos = np.any(st > 0, axis=1)
    neg = np.any(st < 0, axis=1)
    out = np.where(pos & neg, CellClass.CUT, np.where(pos, CellClass.PURE1, CellClass.PURE2))
    if np.any(~pos & ~neg):
        bad = np.flatnonzero(~pos & ~neg)
        raise AssumptionViolation(
            f"cells {bad.tolist()[:10]} have every vertex on the interface", bad)
    return out


def _vertex_tolerance(mesh: Mesh, snap: float) -> np.ndarray:
    hv = np.full(len(mesh.vertices), np.inf)
    for k in range(mesh.cells.shape[1]):
        np.minimum.at(hv, mesh.cells[:, k], mesh.cell_diameter)
    return snap * hv


def classify_element(mesh: Mesh, levelset: LevelSet, cell: int, snap: float = 1e-10) -> CellClass:
    xy = mesh.cell_vertices(cell)
    st = vertex_status(levelset(xy[:, 0], xy[:, 1]), snap * mesh.cell_diameter[cell])
    return CellClass(int(_classify_status(st)[0]))


def bisect_edges(levelset: LevelSet, p0, p1, h, iterations: int = 60, rtol: float = 1e-12) -> np.ndarray:
    """Roots of ``phi`` on a stack of segments with a sign change."""
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(p0),))
    d = p1 - p0
    f0 = levelset(p0[:, 0], p0[:, 1])
    f1 = levelset(p1[:, 0], p1[:, 1])
    if np.any(f0 * f1 >= 0):
        bad = np.flatnonzero(f0 * f1 >= 0)
        raise ValueError(f"no sign change on edge(s) {bad.tolist()[:5]}")
    lo = np.zeros(len(p0))
    hi = np.ones(len(p0))
    flo = f0.copy()
    fhi = f1.copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fm = levelset(p0[:, 0] + mid * d[:, 0], p0[:, 1] + mid * d[:, 1])
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        fhi = np.where(left, fhi, fm)
        if np.all(hi - lo < 1e-17):
            break
    # secant step inside the final bracket
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(fhi != flo, lo - flo * (hi - lo) / (fhi - flo), 0.5 * (lo + hi))
    t = np.clip(np.nan_to_num(t, nan=0.5), lo, hi)
    x = p0 + t[:, None] * d
    res = np.abs(levelset(x[:, 0], x[:, 1]))
    if np.any(res > rtol * h):
        bad = int(np.argmax(res / h))
        raise RuntimeError(
            f"edge intersection did not converge on ({p0[bad].tolist()}) - ({p1[bad].tolist()}): "
            f"|phi| = {res[bad]:.3e}")
    return x


def intersect_edge(levelset: LevelSet, p0, p1, h: float | None = None) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if h is None:
        h = float(np.linalg.norm(p1 - p0))
    return bisect_edges(levelset, p0[None], p1[None], h)[0]


# ---------------------------------------------------------------------------
# single-cell cut topology
# ---------------------------------------------------------------------------

CHORD = -1


@dataclass
class CutTopology:
    cell: int
    cls: CellClass
    chord: np.ndarray | None = None  # (2, 2), oriented along the side-1 boundary
    normal: np.ndarray | None = None  # unit normal of the chord, side 1 -> side 2
    polygons: dict = field(default_factory=dict)  # side -> (k, 2) counter-clockwise
    edge_tags: dict = field(default_factory=dict)  # side -> local edge per polygon edge, CHORD for the chord
    triangles: dict = field(default_factory=dict)  # side -> (k - 2, 3, 2)

    @property
    def chord_length(self) -> float:
        return float(np.linalg.norm(self.chord[1] - self.chord[0])) if self.chord is not None else 0.0

    def area(self, side: int) -> float:
        return polygon_area(self.polygons[side])

    def face_pieces(self):
        """(local edge, side, p0, p1, length) of every polygon edge on the cell boundary."""
        out = []
        for side, poly in self.polygons.items():
            for j, tag in enumerate(self.edge_tags[side]):
                if tag == CHORD:
                    continue
                a, b = poly[j], poly[(j + 1) % len(poly)]
                out.append((tag, side, a, b, float(np.linalg.norm(b - a))))
        return out


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    nxt = np.roll(poly, -1, axis=0)
    return 0.5 * float(np.sum(poly[:, 0] * nxt[:, 1] - nxt[:, 0] * poly[:, 1]))


def _cut_polygons(cell: int, xy: np.ndarray, st: np.ndarray, edge_points: dict) -> CutTopology:
    """Split a cut cell into its two sub-polygons.

    ``edge_points`` maps each local edge with strictly opposite end signs to
    its interface point.
    """
    nv = len(xy)
    st = st.astype(int).copy()
    chord_vertex = np.zeros(nv, dtype=bool)
    for v in np.flatnonzero(st == 0):
        a, b = st[(v - 1) % nv], st[(v + 1) % nv]
        if a != 0 and a == b:
            st[v] = a  # the interface only touches this vertex
        else:
            chord_vertex[v] = True

    n_chord = int(chord_vertex.sum()) + len(edge_points)
    if n_chord != 2:
        raise AssumptionViolation(
            f"cell {cell}: interface meets the cell boundary in {n_chord} points (expected 2); "
            "refine the mesh", [cell])

    topo = CutTopology(cell, CellClass.CUT)
    for side, sgn in ((1, 1), (2, -1)):
        pts, tags, on = [], [], []
        for k in range(nv):
            if st[k] == sgn or chord_vertex[k]:
                pts.append(xy[k])
                tags.append({(k - 1) % nv, k})
                on.append(bool(chord_vertex[k]))
            if k in edge_points:
                pts.append(edge_points[k])
                tags.append({k})
                on.append(True)
        m = len(pts)
        edge_tag = []
        for j in range(m):
            nj = (j + 1) % m
            if on[j] and on[nj]:
                edge_tag.append(CHORD)
            else:
                common = tags[j] & tags[nj]
                if len(common) != 1:
                    raise AssumptionViolation(f"cell {cell}: inconsistent cut polygon", [cell])
                edge_tag.append(common.pop())
        poly = np.array(pts)
        if edge_tag.count(CHORD) != 1:
            raise AssumptionViolation(f"cell {cell}: degenerate cut polygon", [cell])
        topo.polygons[side] = poly
        topo.edge_tags[side] = edge_tag
        topo.triangles[side] = fan_triangulate(poly)
        if side == 1:
            j = edge_tag.index(CHORD)
            a, b = poly[j], poly[(j + 1) % m]
            topo.chord = np.array([a, b])
            t = b - a
            topo.normal = np.array([t[1], -t[0]]) / np.linalg.norm(t)
    return topo


def build_cut_topology(mesh: Mesh, levelset: LevelSet, cell: int, snap: float = 1e-10) -> CutTopology:
    xy = mesh.cell_vertices(cell)
    h = mesh.cell_diameter[cell]
    st = vertex_status(levelset(xy[:, 0], xy[:, 1]), snap * h)
    cls = CellClass(int(_classify_status(st)[0]))
    if cls != CellClass.CUT:
        poly = xy.copy()
        side = int(cls)
        return CutTopology(cell, cls, polygons={side: poly},
                           edge_tags={side: list(range(len(xy)))},
                           triangles={side: fan_triangulate(poly)})
    nv = len(xy)
    edge_points = {}
    for k in range(nv):
        if st[k] * st[(k + 1) % nv] < 0:
            edge_points[k] = intersect_edge(levelset, xy[k], xy[(k + 1) % nv], h)
    _check_edges(levelset, xy[None], np.array([h]), [cell])
    return _cut_polygons(cell, xy, st, edge_points)


def _edge_sign_changes(levelset: LevelSet, p0, p1, tol, samples: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples + 1)
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    st = vertex_status(levelset(pts[..., 0], pts[..., 1]), np.asarray(tol)[:, None])
    changes = np.zeros(len(p0), dtype=int)
    last = np.zeros(len(p0), dtype=np.int8)
    for j in range(samples + 1):
        s = st[:, j]
        flip = (s != 0) & (last != 0) & (s != last)
        changes += flip
        last = np.where(s != 0, s, last)
    return changes


def _check_edges(levelset, cell_xy, h, cells, samples: int = 8, snap: float = 1e-10):
    """Raise if some cell edge is crossed more than once."""
    nv = cell_xy.shape[1]
    p0 = cell_xy.reshape(-1, 2)
    p1 = np.roll(cell_xy, -1, axis=1).reshape(-1, 2)
    tol = np.repeat(snap * np.asarray(h), nv)
    ch = _edge_sign_changes(levelset, p0, p1, tol, samples)
    if np.any(ch > 1):
        bad = sorted({cells[i // nv] for i in np.flatnonzero(ch > 1)})
        raise AssumptionViolation(f"edges of cells {bad[:10]} are crossed more than once", bad)


# ---------------------------------------------------------------------------
# whole-mesh cut geometry
# ---------------------------------------------------------------------------

FACE = 0
INTERFACE = 1


@dataclass
class CutMesh:
    """Pieces, face pieces and interface segments of a mesh cut by a level set.

    Segments are the boundary edges of the pieces, stored contiguously per
    piece (``seg_start``) in counter-clockwise order.  ``seg_kind`` is FACE
    (entity = face-piece id) or INTERFACE (entity = interface-segment id).
    """

    mesh: Mesh
    levelset: LevelSet | None
    curved: bool
    cell_class: np.ndarray
    topologies: dict
    # pieces
    piece_cell: np.ndarray
    piece_side: np.ndarray
    piece_area: np.ndarray
    piece_polygons: list
    tri: np.ndarray
    tri_piece: np.ndarray
    seg_start: np.ndarray
    seg_piece: np.ndarray
    seg_p0: np.ndarray
    seg_p1: np.ndarray
    seg_kind: np.ndarray
    seg_entity: np.ndarray
    # face pieces
    fp_face: np.ndarray
    fp_side: np.ndarray
    fp_p0: np.ndarray
    fp_p1: np.ndarray
    fp_boundary: np.ndarray
    # interface segments
    if_p0: np.ndarray
    if_p1: np.ndarray
    if_cell: np.ndarray  # owning cut cell, -1 for mesh faces lying on the interface
    if_face: np.ndarray
    if_essential: np.ndarray

    @property
    def num_pieces(self) -> int:
        return len(self.piece_cell)

    @property
    def num_face_pieces(self) -> int:
        return len(self.fp_face)

    @property
    def num_interfaces(self) -> int:
        return len(self.if_p0)

    @property
    def piece_h(self) -> np.ndarray:
        return self.mesh.cell_diameter[self.piece_cell]

    @property
    def piece_center(self) -> np.ndarray:
        return self.mesh.cell_centroid[self.piece_cell]

    @property
    def seg_length(self) -> np.ndarray:
        d = self.seg_p1 - self.seg_p0
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def seg_normal(self) -> np.ndarray:
        d = self.seg_p1 - self.seg_p0
        return np.column_stack([d[:, 1], -d[:, 0]]) / self.seg_length[:, None]

    @property
    def fp_length(self) -> np.ndarray:
        d = self.fp_p1 - self.fp_p0
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def if_length(self) -> np.ndarray:
        d = self.if_p1 - self.if_p0
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def if_normal(self) -> np.ndarray:
        """Unit normal of each interface segment pointing from side 1 to side 2."""
        d = self.if_p1 - self.if_p0
        return np.column_stack([d[:, 1], -d[:, 0]]) / self.if_length[:, None]

    def pieces_of_cell(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.piece_cell == cell)

    def segments_of(self, piece: int) -> slice:
        return slice(int(self.seg_start[piece]), int(self.seg_start[piece + 1]))

    @property
    def cut_cells(self) -> np.ndarray:
        return np.flatnonzero(self.cell_class == CellClass.CUT)


def cut_mesh(mesh: Mesh, levelset: LevelSet | None, curved: bool = False,
             snap: float = 1e-10, edge_samples: int = 8) -> CutMesh:
    """Cut every cell of ``mesh`` by ``levelset``.

    With ``curved=True`` only subdomain 2 (``phi < 0``) is kept and the
    interface becomes the (essential) boundary of the computational domain.
    ``levelset=None`` gives an uncut mesh with every cell in subdomain 1.
    """
    V = mesh.vertices
    nv = mesh.cells.shape[1]
    nface = mesh.num_faces
    if levelset is None:
        st_v = np.ones(len(V), dtype=np.int8)
        if curved:
            raise ValueError("curved mode needs a level set")
    else:
        st_v = vertex_status(levelset(V[:, 0], V[:, 1]), _vertex_tolerance(mesh, snap))
    cell_st = st_v[mesh.cells]
    cell_class = _classify_status(cell_st)

    if levelset is not None and edge_samples > 0:
        f0, f1 = V[mesh.faces[:, 0]], V[mesh.faces[:, 1]]
        h_face = mesh.cell_diameter[mesh.face_cells[:, 0]]
        ch = _edge_sign_changes(levelset, f0, f1, snap * h_face, edge_samples)
        if np.any(ch > 1):
            bad = np.flatnonzero(ch > 1)
            cells = sorted(set(mesh.face_cells[bad].ravel().tolist()) - {-1})
            raise AssumptionViolation(
                f"{len(bad)} mesh edges are crossed more than once by the interface "
                f"(cells {cells[:10]}...); refine the mesh", cells)

    # --- face classification ---------------------------------------------
    s0 = st_v[mesh.faces[:, 0]].astype(int)
    s1 = st_v[mesh.faces[:, 1]].astype(int)
    face_cut = s0 * s1 < 0
    face_on = (s0 == 0) & (s1 == 0)
    left, right = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    cls_l = cell_class[left]
    cls_r = np.where(right >= 0, cell_class[np.maximum(right, 0)], 0)
    face_iface = face_on & (right >= 0) & (cls_l != cls_r)
    face_iface &= (cls_l != CellClass.CUT) & (cls_r != CellClass.CUT)

    face_point = np.full((nface, 2), np.nan)
    if np.any(face_cut):
        idx = np.flatnonzero(face_cut)
        face_point[idx] = bisect_edges(levelset, V[mesh.faces[idx, 0]], V[mesh.faces[idx, 1]],
                                       mesh.cell_diameter[left[idx]])

    uncut_side = np.where(s0 != 0, s0, s1)
    uncut_side = np.where(uncut_side > 0, 1, 2)
    # faces lying on the interface but not separating two sides take their cell's side
    on_same = face_on & ~face_iface
    uncut_side[on_same] = np.where(cls_l[on_same] == CellClass.CUT, cls_r[on_same], cls_l[on_same])

    keep_side = (2,) if curved else (1, 2)
    fp_index = np.full((nface, 2), -1, dtype=np.int64)
    fp_face, fp_side, fp_p0, fp_p1 = [], [], [], []
    # face pieces, in face order then side order
    A, B = V[mesh.faces[:, 0]], V[mesh.faces[:, 1]]
    for side in (1, 2):
        if side not in keep_side:
            continue
        sgn = 1 if side == 1 else -1
        whole = ~face_cut & ~face_iface & (uncut_side == side)
        partial = face_cut
        sel = whole | partial
        ids = np.flatnonzero(sel)
        p0 = A[ids].copy()
        p1 = B[ids].copy()
        pc = partial[ids]
        first_on_side = s0[ids] == sgn
        # keep the face orientation; replace the far end point by the crossing
        p1[pc & first_on_side] = face_point[ids[pc & first_on_side]]
        p0[pc & ~first_on_side] = face_point[ids[pc & ~first_on_side]]
        fp_face.append(ids)
        fp_side.append(np.full(len(ids), side))
        fp_p0.append(p0)
        fp_p1.append(p1)
    fp_face = np.concatenate(fp_face)
    fp_side = np.concatenate(fp_side)
    fp_p0 = np.concatenate(fp_p0)
    fp_p1 = np.concatenate(fp_p1)
    order = np.lexsort((fp_side, fp_face))
    fp_face, fp_side, fp_p0, fp_p1 = fp_face[order], fp_side[order], fp_p0[order], fp_p1[order]
    fp_index[fp_face, fp_side - 1] = np.arange(len(fp_face))
    fp_boundary = right[fp_face] < 0

    # --- interface segments ------------------------------------------------
    topologies = {}
    cut_ids = np.flatnonzero(cell_class == CellClass.CUT)
    if_p0, if_p1, if_cell, if_face = [], [], [], []
    for c in cut_ids:
        xy = V[mesh.cells[c]]
        edge_points = {k: face_point[mesh.cell_faces[c, k]] for k in range(nv)
                       if face_cut[mesh.cell_faces[c, k]]}
        topo = _cut_polygons(int(c), xy, cell_st[c], edge_points)
        topologies[int(c)] = topo
        if_p0.append(topo.chord[0])
        if_p1.append(topo.chord[1])
        if_cell.append(int(c))
        if_face.append(-1)
    iface_of_face = np.full(nface, -1, dtype=np.int64)
    for f in np.flatnonzero(face_iface):
        a, b = A[f], B[f]
        if cls_l[f] != CellClass.PURE1:
            a, b = b, a  # orient along the side-1 cell
        iface_of_face[f] = len(if_p0)
        if_p0.append(a)
        if_p1.append(b)
        if_cell.append(-1)
        if_face.append(int(f))
    if_p0 = np.array(if_p0, dtype=float).reshape(-1, 2)
    if_p1 = np.array(if_p1, dtype=float).reshape(-1, 2)
    if_cell = np.array(if_cell, dtype=np.int64)
    if_face = np.array(if_face, dtype=np.int64)
    if_essential = np.full(len(if_p0), bool(curved))
    chord_id = {c: i for i, c in enumerate(if_cell.tolist()) if c >= 0}

    # --- pieces --------------------------------------------------------------
    rec_cell, rec_side, rec_poly, rec_segs = [], [], [], []
    uncut = np.flatnonzero(cell_class != CellClass.CUT)
    uncut = uncut[np.isin(cell_class[uncut], keep_side)]
    # uncut pieces, vectorised
    u_side = cell_class[uncut].astype(int)
    u_xy = V[mesh.cells[uncut]]
    u_faces = mesh.cell_faces[uncut]
    u_kind = np.where(face_iface[u_faces], INTERFACE, FACE)
    u_ent = np.where(u_kind == INTERFACE, iface_of_face[u_faces],
                     fp_index[u_faces, (u_side - 1)[:, None]])
    if np.any(u_ent < 0):
        raise RuntimeError("inconsistent face pieces on uncut cells")

    cut_records = []
    for c in cut_ids:
        topo = topologies[int(c)]
        for side in keep_side:
            poly = topo.polygons[side]
            segs = []
            m = len(poly)
            for j, tag in enumerate(topo.edge_tags[side]):
                a, b = poly[j], poly[(j + 1) % m]
                if tag == CHORD:
                    segs.append((a, b, INTERFACE, chord_id[int(c)]))
                else:
                    f = mesh.cell_faces[c, tag]
                    ent = fp_index[f, side - 1]
                    if ent < 0:
                        raise RuntimeError(f"cell {c}: missing face piece on face {f}")
                    segs.append((a, b, FACE, ent))
            cut_records.append((int(c), side, poly, segs))

    # merge uncut and cut pieces in (cell, side) order
    n_u = len(uncut)
    keys = np.concatenate([uncut * 2 + (u_side - 1),
                           np.array([c * 2 + (s - 1) for c, s, _, _ in cut_records], dtype=np.int64)])
    perm = np.argsort(keys, kind="stable")
    npieces = len(keys)
    piece_cell = np.empty(npieces, dtype=np.int64)
    piece_side = np.empty(npieces, dtype=np.int64)
    nseg = np.empty(npieces, dtype=np.int64)
    src = perm  # new piece i comes from source perm[i]
    is_u = src < n_u
    piece_cell[is_u] = uncut[src[is_u]]
    piece_side[is_u] = u_side[src[is_u]]
    nseg[is_u] = nv
    for i in np.flatnonzero(~is_u):
        c, s, _, segs = cut_records[src[i] - n_u]
        piece_cell[i], piece_side[i], nseg[i] = c, s, len(segs)
    seg_start = np.concatenate([[0], np.cumsum(nseg)])
    S = int(seg_start[-1])
    seg_p0 = np.empty((S, 2))
    seg_p1 = np.empty((S, 2))
    seg_kind = np.empty(S, dtype=np.int64)
    seg_entity = np.empty(S, dtype=np.int64)
    seg_piece = np.repeat(np.arange(npieces), nseg)

    u_new = np.flatnonzero(is_u)
    u_src = src[is_u]
    for k in range(nv):
        pos = seg_start[u_new] + k
        seg_p0[pos] = u_xy[u_src, k]
        seg_p1[pos] = u_xy[u_src, (k + 1) % nv]
        seg_kind[pos] = u_kind[u_src, k]
        seg_entity[pos] = u_ent[u_src, k]

    polygons = [None] * npieces
    for i, j in zip(u_new, u_src):
        polygons[i] = u_xy[j]
    for i in np.flatnonzero(~is_u):
        c, s, poly, segs = cut_records[src[i] - n_u]
        polygons[i] = poly
        for k, (a, b, kind, ent) in enumerate(segs):
            pos = seg_start[i] + k
            seg_p0[pos], seg_p1[pos], seg_kind[pos], seg_entity[pos] = a, b, kind, ent

    # fan triangles
    ntri = nseg - 2
    tri_piece = np.repeat(np.arange(npieces), ntri)
    tri = np.empty((len(tri_piece), 3, 2))
    tri_start = np.concatenate([[0], np.cumsum(ntri)])
    for k in range(nv - 2):
        pos = tri_start[u_new] + k
        tri[pos, 0] = u_xy[u_src, 0]
        tri[pos, 1] = u_xy[u_src, k + 1]
        tri[pos, 2] = u_xy[u_src, k + 2]
    for i in np.flatnonzero(~is_u):
        tri[tri_start[i]:tri_start[i + 1]] = fan_triangulate(polygons[i])

    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    tarea = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    piece_area = np.bincount(tri_piece, weights=tarea, minlength=npieces)

    return CutMesh(
        mesh=mesh, levelset=levelset, curved=bool(curved), cell_class=cell_class,
        topologies=topologies,
        piece_cell=piece_cell, piece_side=piece_side, piece_area=piece_area,
        piece_polygons=polygons, tri=tri, tri_piece=tri_piece,
        seg_start=seg_start, seg_piece=seg_piece, seg_p0=seg_p0, seg_p1=seg_p1,
        seg_kind=seg_kind, seg_entity=seg_entity,
        fp_face=fp_face, fp_side=fp_side, fp_p0=fp_p0, fp_p1=fp_p1, fp_boundary=fp_boundary,
        if_p0=if_p0, if_p1=if_p1, if_cell=if_cell, if_face=if_face, if_essential=if_essential,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass
class InterfaceReport:
    a1_ok: bool
    a1_violations: list
    gamma: float
    min_cut_fraction: float
    num_cut_cells: int
    message: str = ""


def _project_to_interface(levelset: LevelSet, pts: np.ndarray, steps: int = 8) -> np.ndarray:
    x = pts.copy()
    for _ in range(steps):
        f = levelset(x[:, 0], x[:, 1])
        g = np.asarray(levelset.grad(x[:, 0], x[:, 1]))
        x = x - (f / np.sum(g * g, axis=0))[:, None] * g.T
    return x


def validate_interface_assumptions(mesh: Mesh, levelset: LevelSet, snap: float = 1e-10,
                                   edge_samples: int = 16, gamma_samples: int = 5) -> InterfaceReport:
    """Report (never raise) on interface resolution.

    Checks single crossings per edge and two per cut cell, estimates the
    normal-variation constant ``gamma`` from samples of the interface inside
    each cut cell, and reports the smallest cut-piece area fraction.
    """
    V = mesh.vertices
    cells_xy = V[mesh.cells]
    h = mesh.cell_diameter
    nv = mesh.cells.shape[1]
    st = vertex_status(levelset(V[:, 0], V[:, 1]), _vertex_tolerance(mesh, snap))
    cell_st = st[mesh.cells]
    pos = np.any(cell_st > 0, axis=1)
    neg = np.any(cell_st < 0, axis=1)
    violations = set(np.flatnonzero(~pos & ~neg).tolist())

    p0 = cells_xy.reshape(-1, 2)
    p1 = np.roll(cells_xy, -1, axis=1).reshape(-1, 2)
    ch = _edge_sign_changes(levelset, p0, p1, np.repeat(snap * h, nv), edge_samples).reshape(-1, nv)
    violations |= set(np.flatnonzero(np.any(ch > 1, axis=1)).tolist())
    # a pure cell whose edges are crossed (twice at a tip) is also unresolved
    violations |= set(np.flatnonzero(~(pos & neg) & (ch.sum(axis=1) > 0)).tolist())

    gamma = 0.0
    min_frac = 1.0
    cut = np.flatnonzero(pos & neg)
    for c in cut:
        if c in violations:
            continue
        try:
            topo = build_cut_topology(mesh, levelset, int(c), snap)
        except AssumptionViolation:
            violations.add(int(c))
            continue
        frac = min(topo.area(1), topo.area(2)) / mesh.cell_area[c]
        min_frac = min(min_frac, frac)
        t = np.linspace(0.0, 1.0, gamma_samples)
        samples = topo.chord[0] + t[:, None] * (topo.chord[1] - topo.chord[0])
        on_gamma = _project_to_interface(levelset, samples)
        nrm = levelset.normal(on_gamma[:, 0], on_gamma[:, 1]).T
        diff = np.linalg.norm(nrm[:, None, :] - nrm[None, :, :], axis=2).max()
        gamma = max(gamma, float(diff / h[c]))
    viol = sorted(violations)
    msg = "ok" if not viol else f"{len(viol)} cells violate the interface resolution assumption"
    return InterfaceReport(not viol, viol, gamma, float(min_frac), int(len(cut)), msg)
