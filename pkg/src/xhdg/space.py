"""Enriched discrete spaces: degree-of-freedom layout, local bases, L2 projections.

Every element piece carries a constant gradient tensor (4 dofs), a linear
velocity (2 x 3 dofs) and a constant pressure.  Velocity traces are constant
per face piece (2 dofs) and of degree ``m`` per interface segment
(2 (m + 1) dofs).

Local P1 bases are monomials centred at the *parent cell* centroid and scaled
by the parent diameter, so sliver pieces do not spoil conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levelset import FACE, INTERFACE, CutMesh
from .quadrature import map_segments, map_triangles, polygon_rule, segment_rule


def cell_basis(x, y, center, h) -> np.ndarray:
    """P1 basis ``{1, (x - xc)/h, (y - yc)/h}``, shape (3, ...)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    center = np.asarray(center, dtype=float)
    cx, cy = center[..., 0], center[..., 1]
    return np.stack([np.ones_like(x), (x - cx) / h, (y - cy) / h])


def segment_basis(x, y, p0, p1, r: int) -> np.ndarray:
    """Basis ``{1, (s - s_mid)/|F|}`` of P_r on the segment p0 -> p1, shape (r + 1, ...)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if r == 0:
        return np.ones_like(x)[None]
    d = p1 - p0
    length2 = d[..., 0] ** 2 + d[..., 1] ** 2
    mid = 0.5 * (p0 + p1)
    xi = ((x - mid[..., 0]) * d[..., 0] + (y - mid[..., 1]) * d[..., 1]) / length2
    return np.stack([np.ones_like(x), xi])


def segment_mass(length, r: int) -> np.ndarray:
    """Diagonal of the segment mass matrix in the centred basis."""
    length = np.asarray(length, dtype=float)
    if r == 0:
        return length[..., None]
    return np.stack([length, length / 12.0], axis=-1)


@dataclass(frozen=True)
class DofMap:
    """Global numbering.

    Condensed layout: ``[p | u_hat | u_tilde | multiplier]``.  The element
    unknowns (L, u) are numbered per piece for the monolithic oracle:
    ``L`` at ``4 * piece + 2 * a + b`` and ``u`` at ``6 * piece + 3 * a + j``.
    """

    m: int
    num_pieces: int
    num_face_pieces: int
    num_interfaces: int
    fp_essential: np.ndarray
    if_essential: np.ndarray

    @property
    def nb_interface(self) -> int:
        return self.m + 1

    @property
    def p_offset(self) -> int:
        return 0

    @property
    def hat_offset(self) -> int:
        return self.num_pieces

    @property
    def tilde_offset(self) -> int:
        return self.num_pieces + 2 * self.num_face_pieces

    @property
    def num_traces(self) -> int:
        return 2 * self.num_face_pieces + 2 * self.nb_interface * self.num_interfaces

    @property
    def multiplier(self) -> int:
        return self.num_pieces + self.num_traces

    @property
    def num_condensed(self) -> int:
        return self.multiplier + 1

    @property
    def num_L(self) -> int:
        return 4 * self.num_pieces

    @property
    def num_u(self) -> int:
        return 6 * self.num_pieces

    @property
    def num_total(self) -> int:
        return self.num_L + self.num_u + self.num_condensed

    def face_dofs(self, fp) -> np.ndarray:
        """(..., 2) global dofs (x, y) of face pieces."""
        fp = np.asarray(fp)
        return self.hat_offset + 2 * fp[..., None] + np.arange(2)

    def interface_dofs(self, seg) -> np.ndarray:
        """(..., 2, m + 1) global dofs of interface segments."""
        seg = np.asarray(seg)
        nb = self.nb_interface
        base = self.tilde_offset + 2 * nb * seg
        return base[..., None, None] + nb * np.arange(2)[:, None] + np.arange(nb)[None, :]

    @property
    def essential(self) -> np.ndarray:
        """Boolean mask over the condensed numbering."""
        mask = np.zeros(self.num_condensed, dtype=bool)
        mask[self.face_dofs(np.flatnonzero(self.fp_essential)).ravel()] = True
        mask[self.interface_dofs(np.flatnonzero(self.if_essential)).ravel()] = True
        return mask

    def counts(self) -> dict:
        return {
            "L": self.num_L,
            "u": self.num_u,
            "p": self.num_pieces,
            "u_hat": 2 * self.num_face_pieces,
            "u_tilde": 2 * self.nb_interface * self.num_interfaces,
            "multiplier": 1,
            "condensed": self.num_condensed,
            "essential": int(self.essential.sum()),
        }


def build_dofmap(cut: CutMesh, m: int = 0) -> DofMap:
    if m not in (0, 1):
        raise ValueError(f"interface trace degree must be 0 or 1, got {m}")
    return DofMap(m, cut.num_pieces, cut.num_face_pieces, cut.num_interfaces,
                  cut.fp_boundary.copy(), cut.if_essential.copy())


def segment_dofs(cut: CutMesh, dofmap: DofMap, piece: int) -> list[np.ndarray]:
    """Global trace dofs, shape (2, nb), for each boundary segment of a piece."""
    out = []
    sl = cut.segments_of(piece)
    for kind, ent in zip(cut.seg_kind[sl], cut.seg_entity[sl]):
        if kind == FACE:
            out.append(dofmap.face_dofs(ent)[:, None])
        else:
            out.append(dofmap.interface_dofs(ent))
    return out


# ---------------------------------------------------------------------------
# L2 projections
# ---------------------------------------------------------------------------


def project_Qr_cell(field, polygon, r: int, center=None, h=None, degree: int = 8) -> np.ndarray:
    """Coefficients of the L2(polygon) projection of ``field`` onto P_r.

    ``field(x, y)`` may return a scalar array (n,) or a stacked array
    (k, n); the result then has shape (r-dim,) or (k, r-dim).  The basis is
    :func:`cell_basis` about ``center`` scaled by ``h`` (defaults: polygon
    centroid and diameter).
    """
    if r not in (0, 1):
        raise ValueError("r must be 0 or 1")
    polygon = np.asarray(polygon, dtype=float)
    rule = polygon_rule(polygon, degree)
    area = rule.measure
    if not area > 0:
        raise ValueError("zero-measure piece")
    if center is None:
        center = rule.points.T @ rule.weights / area
    if h is None:
        h = max(np.linalg.norm(a - b) for a in polygon for b in polygon)
    vals = np.asarray(field(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    phi = cell_basis(rule.points[:, 0], rule.points[:, 1], center, h)[: 1 if r == 0 else 3]
    M = (phi * rule.weights) @ phi.T
    rhs = (vals * rule.weights) @ phi.T if vals.ndim > 1 else phi @ (vals * rule.weights)
    return np.linalg.solve(M, rhs.T).T


def project_Qrb_face(field, p0, p1, r: int, degree: int = 8) -> np.ndarray:
    """Coefficients of the L2(segment) projection onto P_r in :func:`segment_basis`."""
    if r not in (0, 1):
        raise ValueError("r must be 0 or 1")
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    if not length > 0:
        raise ValueError("zero-length segment")
    rule = segment_rule(p0, p1, degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    vals = np.asarray(field(x, y), dtype=float)
    psi = segment_basis(x, y, p0, p1, r)
    mass = segment_mass(length, r)
    return (vals * rule.weights) @ psi.T / mass if vals.ndim > 1 else psi @ (vals * rule.weights) / mass


def piece_moments(cut: CutMesh, degree: int = 4):
    """Composite quadrature over all pieces.

    Returns points (N, 2), weights (N,), owning piece (N,) and the cell basis
    at the points (3, N).
    """
    pts, w = map_triangles(cut.tri, degree)
    owner = np.repeat(cut.tri_piece, w.shape[1])
    pts = pts.reshape(-1, 2)
    w = w.ravel()
    phi = cell_basis(pts[:, 0], pts[:, 1], cut.piece_center[owner], cut.piece_h[owner])
    return pts, w, owner, phi


def project_cells(cut: CutMesh, field, r: int, degree: int = 8) -> np.ndarray:
    """Batch projection onto P_r of every piece.

    ``field(side, x, y)`` returns (k, n).  Result: (P, k, r-dim) in the parent
    cell basis.
    """
    pts, w, owner, phi = piece_moments(cut, degree)
    side = cut.piece_side[owner]
    vals = _by_side(field, side, pts)
    nb = 1 if r == 0 else 3
    phi = phi[:nb]
    P = cut.num_pieces
    M = np.zeros((P, nb, nb))
    for i in range(nb):
        for j in range(nb):
            M[:, i, j] = np.bincount(owner, weights=w * phi[i] * phi[j], minlength=P)
    k = vals.shape[0]
    rhs = np.zeros((P, nb, k))
    for i in range(nb):
        for c in range(k):
            rhs[:, i, c] = np.bincount(owner, weights=w * phi[i] * vals[c], minlength=P)
    return np.swapaxes(np.linalg.solve(M, rhs), 1, 2)


def project_segments(p0, p1, values_fn, r: int, degree: int = 8) -> np.ndarray:
    """Batch projection onto P_r of many segments; ``values_fn(x, y)`` -> (k, S, q).

    Result: (S, k, r + 1).
    """
    pts, w, _ = map_segments(p0, p1, degree)
    vals = np.asarray(values_fn(pts[..., 0], pts[..., 1]), dtype=float)
    psi = segment_basis(pts[..., 0], pts[..., 1], np.asarray(p0)[:, None, :], np.asarray(p1)[:, None, :], r)
    length = w.sum(axis=1)
    mass = segment_mass(length, r)  # (S, r+1)
    coef = np.einsum("ksq,bsq,sq->skb", vals, psi, w)
    return coef / mass[:, None, :]


def _by_side(field, side, pts) -> np.ndarray:
    out = None
    for s in np.unique(side):
        sel = side == s
        v = np.asarray(field(int(s), pts[sel, 0], pts[sel, 1]), dtype=float)
        if out is None:
            out = np.zeros((v.shape[0], len(side)))
        out[:, sel] = v
    return out
