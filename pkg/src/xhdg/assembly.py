"""Local forms of the X-HDG scheme.

Each element piece K_i carries (L, u, p) and sees its boundary as a list of
segments: face pieces (trace ``u_hat``, constant) and interface segments
(trace ``u_tilde`` of degree m).  Because L and p are piecewise constant, no
volume term couples u to L or p; all coupling goes through the traces.

Per velocity component ``a`` and trace vector ``t_a`` the local equations are

    |K| / nu * L[a, b]            = w_b . t_a
    A u_a - tau G^T t_a           = (f_a, phi)
    sum_a w_a . t_a               = 0                      (pressure test)
    flux_a = Z t_a - w_a p - tau G u_a + tau M t_a         (trace tests)

with ``w_b[r] = n_b int(psi_r)``, ``G[r, j] = int(psi_r phi_j)``, ``M`` the
(diagonal) trace mass, ``A = alpha (phi, phi) + tau G^T M^-1 G`` and
``Z = nu / |K| sum_b w_b w_b^T``.  Pieces are grouped by their number of
face and interface segments so all of this is batched with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .levelset import FACE, INTERFACE, CutMesh
from .quadrature import map_segments
from .space import DofMap, cell_basis, piece_moments, segment_basis, segment_mass

VectorField = Callable[..., np.ndarray]


class SingularLocalVelocityBlock(np.linalg.LinAlgError):
    def __init__(self, cells):
        self.cells = list(cells)
        super().__init__(f"local velocity block is not positive definite on cells {self.cells[:10]}")


@dataclass
class ProblemData:
    """Coefficients and data of an interface (or curved-boundary) problem.

    ``f(side, x, y)`` and ``g_D(side, x, y)`` return (2, n) arrays;
    ``g_N(x, y, normal)`` returns the traction jump (2, n) for normals (2, n)
    pointing from side 1 into side 2.  ``None`` means zero.
    """

    nu: tuple[float, float] = (1.0, 1.0)
    alpha: tuple[float, float] = (0.0, 0.0)
    f: VectorField | None = None
    g_D: VectorField | None = None
    g_N: VectorField | None = None
    curved: bool = False
    exact_interface: bool | None = None  # None: exact traces iff the level set is affine

    def __post_init__(self):
        self.nu = tuple(float(v) for v in self.nu)
        self.alpha = tuple(float(v) for v in self.alpha)
        if min(self.nu) <= 0:
            raise ValueError(f"viscosities must be positive, got {self.nu}")
        if min(self.alpha) < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")

    def scaled(self, c: float) -> "ProblemData":
        """Same problem with nu, alpha, f and g_N multiplied by ``c``.

        The velocity is unchanged and the gradient and pressure scale by ``c``.
        """
        f, gN = self.f, self.g_N
        return ProblemData(
            tuple(c * v for v in self.nu), tuple(c * v for v in self.alpha),
            None if f is None else (lambda s, x, y: c * np.asarray(f(s, x, y))),
            self.g_D,
            None if gN is None else (lambda x, y, n: c * np.asarray(gN(x, y, n))),
            self.curved, self.exact_interface)


def stabilization_tau(nu: float, h: float) -> float:
    """tau = nu_i / h_K on every face piece or interface segment of K_i."""
    return float(nu) / float(h)


# ---------------------------------------------------------------------------
# batched local blocks
# ---------------------------------------------------------------------------


@dataclass
class PieceGroup:
    pieces: np.ndarray  # (Pg,)
    segs: np.ndarray  # (Pg, ns) segment ids, faces first
    row_seg: np.ndarray  # (nts,) local segment of each trace row
    row_k: np.ndarray  # (nts,) basis index of each trace row
    nu: np.ndarray
    tau: np.ndarray
    area: np.ndarray
    g: np.ndarray  # (Pg, nts)
    mass: np.ndarray  # (Pg, nts)
    normal: np.ndarray  # (Pg, nts, 2)
    G: np.ndarray  # (Pg, nts, 3)
    A: np.ndarray  # (Pg, 3, 3)
    load: np.ndarray  # (Pg, 2, 3)
    dofs: np.ndarray  # (Pg, 2, nts) global trace dofs per component
    extra: dict = field(default_factory=dict)

    @property
    def w(self) -> np.ndarray:
        """(Pg, 2, nts): w[b][r] = n_b(r) * int(psi_r)."""
        return np.moveaxis(self.g[..., None] * self.normal, -1, 1)


def _segment_G(cut: CutMesh, m: int, degree: int = 3) -> np.ndarray:
    """(S, 2, 3) integrals of psi_k * phi_j over every piece segment."""
    pts, w, _ = map_segments(cut.seg_p0, cut.seg_p1, degree)
    piece = cut.seg_piece
    center = cut.piece_center[piece][:, None, :]
    h = cut.piece_h[piece][:, None]
    phi = cell_basis(pts[..., 0], pts[..., 1], center, h)  # (3, S, q)
    # interface segments use the canonical orientation of the interface
    q0 = cut.seg_p0.copy()
    q1 = cut.seg_p1.copy()
    isf = cut.seg_kind == INTERFACE
    ent = cut.seg_entity[isf]
    q0[isf] = cut.if_p0[ent]
    q1[isf] = cut.if_p1[ent]
    psi = segment_basis(pts[..., 0], pts[..., 1], q0[:, None, :], q1[:, None, :], 1)  # (2, S, q)
    return np.einsum("ksq,jsq,sq->skj", psi, phi, w)


def _volume_terms(cut: CutMesh, data: ProblemData, degree: int):
    """Velocity mass matrices (P, 3, 3) and loads (P, 2, 3)."""
    pts, w, owner, phi = piece_moments(cut, degree)
    P = cut.num_pieces
    M = np.zeros((P, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            M[:, i, j] = M[:, j, i] = np.bincount(owner, weights=w * phi[i] * phi[j], minlength=P)
    load = np.zeros((P, 2, 3))
    if data.f is not None:
        side = cut.piece_side[owner]
        fv = np.zeros((2, len(w)))
        for s in np.unique(side):
            sel = side == s
            fv[:, sel] = np.asarray(data.f(int(s), pts[sel, 0], pts[sel, 1]), dtype=float)
        for a in range(2):
            for j in range(3):
                load[:, a, j] = np.bincount(owner, weights=w * fv[a] * phi[j], minlength=P)
    return M, load


def piece_groups(cut: CutMesh, dofmap: DofMap, data: ProblemData, pieces=None,
                 degree: int = 4) -> list[PieceGroup]:
    m = dofmap.m
    nb_if = m + 1
    Gseg = _segment_G(cut, m)
    Mvol, load = _volume_terms(cut, data, degree)
    seg_len = cut.seg_length
    seg_n = cut.seg_normal

    if pieces is None:
        pieces = np.arange(cut.num_pieces)
    pieces = np.asarray(pieces)
    nseg = np.diff(cut.seg_start)
    is_if = cut.seg_kind == INTERFACE
    n_if = np.add.reduceat(is_if.astype(int), cut.seg_start[:-1]) if len(is_if) else np.zeros(0, int)
    n_if = np.where(nseg > 0, n_if, 0)
    nu = np.asarray(data.nu)[cut.piece_side - 1]
    alpha = np.asarray(data.alpha)[cut.piece_side - 1]
    h = cut.piece_h

    groups = []
    keys = np.stack([nseg[pieces] - n_if[pieces], n_if[pieces]], axis=1)
    for nf, ni in np.unique(keys, axis=0):
        sel = pieces[(keys[:, 0] == nf) & (keys[:, 1] == ni)]
        ns = nf + ni
        # segment ids per piece: faces first (stable), then interfaces
        raw = cut.seg_start[sel][:, None] + np.arange(ns)[None, :]
        order = np.argsort(is_if[raw], axis=1, kind="stable")
        segs = np.take_along_axis(raw, order, axis=1)

        row_seg = np.concatenate([np.arange(nf), np.repeat(np.arange(nf, ns), nb_if)]).astype(int)
        row_k = np.concatenate([np.zeros(nf, int), np.tile(np.arange(nb_if), ni)]).astype(int)
        rs = segs[:, row_seg]  # (Pg, nts)
        length = seg_len[rs]
        g = np.where(row_k == 0, length, 0.0)
        mass = np.where(row_k == 0, length, length / 12.0)
        normal = seg_n[rs]
        G = Gseg[rs, row_k]  # (Pg, nts, 3)
        tau = nu[sel] / h[sel]
        A = alpha[sel, None, None] * Mvol[sel] + tau[:, None, None] * np.einsum(
            "pri,prj->pij", G / mass[..., None], G)

        ent = cut.seg_entity[rs]
        kind = cut.seg_kind[rs]
        dofs = np.empty((len(sel), 2, len(row_seg)), dtype=np.int64)
        for a in range(2):
            dofs[:, a] = np.where(kind == FACE,
                                  dofmap.hat_offset + 2 * ent + a,
                                  dofmap.tilde_offset + 2 * nb_if * ent + nb_if * a + row_k)
        groups.append(PieceGroup(sel, segs, row_seg, row_k, nu[sel], tau, cut.piece_area[sel],
                                 g, mass, normal, G, A, load[sel], dofs))

    bad = []
    for grp in groups:
        eig = np.linalg.eigvalsh(grp.A)
        scale = np.abs(eig).max(axis=1)
        bad.extend(cut.piece_cell[grp.pieces[eig[:, 0] <= 1e-14 * scale]].tolist())
    if bad:
        raise SingularLocalVelocityBlock(sorted(set(bad)))
    return groups


# ---------------------------------------------------------------------------
# interface and boundary data
# ---------------------------------------------------------------------------


def interface_moments(cut: CutMesh, fn, r: int, exact: bool, degree: int = 8, which=None):
    """Moments int(g psi_k) of data on interface segments, shape (I, 2, r + 1).

    ``fn(x, y, normal)`` is evaluated at the segment end points and linearly
    interpolated, unless ``exact`` in which case it is integrated along the
    segment.  ``normal`` is the chord normal (side 1 -> side 2).
    """
    idx = np.arange(cut.num_interfaces) if which is None else np.asarray(which)
    p0, p1 = cut.if_p0[idx], cut.if_p1[idx]
    nrm = cut.if_normal[idx]
    length = cut.if_length[idx]
    out = np.zeros((len(idx), 2, r + 1))
    if len(idx) == 0:
        return out
    if exact:
        pts, w, _ = map_segments(p0, p1, degree)
        nq = np.broadcast_to(nrm.T[:, :, None], (2,) + w.shape)
        vals = np.asarray(fn(pts[..., 0], pts[..., 1], nq), dtype=float)  # (2, I, q)
        psi = segment_basis(pts[..., 0], pts[..., 1], p0[:, None, :], p1[:, None, :], r)
        return np.einsum("aiq,kiq,iq->iak", vals, psi, w)
    ga = np.asarray(fn(p0[:, 0], p0[:, 1], nrm.T), dtype=float).T  # (I, 2)
    gb = np.asarray(fn(p1[:, 0], p1[:, 1], nrm.T), dtype=float).T
    out[:, :, 0] = length[:, None] * 0.5 * (ga + gb)
    if r == 1:
        out[:, :, 1] = length[:, None] * (gb - ga) / 12.0
    return out


def interface_projection(cut: CutMesh, fn, r: int, exact: bool, degree: int = 8, which=None):
    """Coefficients (I, 2, r + 1) of the P_r projection of interface data."""
    idx = np.arange(cut.num_interfaces) if which is None else np.asarray(which)
    mom = interface_moments(cut, fn, r, exact, degree, idx)
    return mom / segment_mass(cut.if_length[idx], r)[:, None, :]


def _use_exact(cut: CutMesh, data: ProblemData) -> bool:
    if data.exact_interface is not None:
        return bool(data.exact_interface)
    return bool(cut.levelset is not None and cut.levelset.affine)


def essential_values(cut: CutMesh, dofmap: DofMap, data: ProblemData, degree: int = 8) -> np.ndarray:
    """Values of all essential trace dofs (zeros elsewhere), condensed numbering."""
    x = np.zeros(dofmap.num_condensed)
    if data.g_D is None:
        return x
    bnd = np.flatnonzero(dofmap.fp_essential)
    if len(bnd):
        pts, w, _ = map_segments(cut.fp_p0[bnd], cut.fp_p1[bnd], degree)
        side = cut.fp_side[bnd]
        vals = np.zeros((2,) + w.shape)
        for s in np.unique(side):
            sel = side == s
            vals[:, sel] = np.asarray(data.g_D(int(s), pts[sel, :, 0], pts[sel, :, 1]), dtype=float)
        mean = np.einsum("asq,sq->sa", vals, w) / w.sum(axis=1)[:, None]
        x[dofmap.face_dofs(bnd)] = mean
    ess_if = np.flatnonzero(dofmap.if_essential)
    if len(ess_if):
        def gd(xx, yy, n):
            return data.g_D(2, xx, yy)
        coef = interface_projection(cut, gd, dofmap.m, _use_exact(cut, data), degree, ess_if)
        # On a chord approximation the projected data carries a small net
        # flux; remove it along the outward normals so the discrete problem
        # stays compatible and the multiplier vanishes.
        n_out = -cut.if_normal[ess_if]  # kept side is 2, if_normal points into it
        length = cut.if_length[ess_if]
        if len(bnd):
            fp_out = np.zeros((cut.num_face_pieces, 2))
            fseg = np.flatnonzero(cut.seg_kind == 0)
            fp_out[cut.seg_entity[fseg]] = cut.seg_normal[fseg]
            net = float(np.sum(cut.fp_length[bnd] * np.sum(x[dofmap.face_dofs(bnd)] * fp_out[bnd], axis=1)))
        else:
            net = 0.0
        net += float(np.sum(length * np.sum(coef[:, :, 0] * n_out, axis=1)))
        coef[:, :, 0] -= (net / length.sum()) * n_out
        x[dofmap.interface_dofs(ess_if)] = coef
    return x


def traction_load(cut: CutMesh, dofmap: DofMap, data: ProblemData, degree: int = 8) -> np.ndarray:
    """Right-hand side <g_N, mu_tilde> on free interface dofs (condensed numbering)."""
    b = np.zeros(dofmap.num_condensed)
    if data.g_N is None:
        return b
    free = np.flatnonzero(~dofmap.if_essential)
    if len(free):
        mom = interface_moments(cut, data.g_N, dofmap.m, _use_exact(cut, data), degree, free)
        np.add.at(b, dofmap.interface_dofs(free).ravel(), mom.ravel())
    return b


# ---------------------------------------------------------------------------
# per-cell dense view
# ---------------------------------------------------------------------------


@dataclass
class PieceSystem:
    piece: int
    side: int
    trace_dofs: np.ndarray  # (2 nts,) component-major
    A_LL: np.ndarray  # (4,) diagonal
    A_Lt: np.ndarray  # (4, 2 nts)
    A_uu: np.ndarray  # (6, 6)
    A_ut: np.ndarray  # (6, 2 nts)
    b_u: np.ndarray  # (6,)
    C_t: np.ndarray  # (2 nts,) pressure test row
    D_L: np.ndarray  # (2 nts, 4)
    D_p: np.ndarray  # (2 nts,)
    D_u: np.ndarray  # (2 nts, 6)
    D_t: np.ndarray  # (2 nts, 2 nts)


@dataclass
class LocalSystem:
    cell: int
    pieces: list[PieceSystem]


def _dense_piece(grp: PieceGroup, i: int, side: int) -> PieceSystem:
    nts = grp.g.shape[1]
    w = grp.w[i]  # (2, nts)
    G = grp.G[i]
    tau = grp.tau[i]
    A_LL = np.full(4, grp.area[i] / grp.nu[i])
    A_Lt = np.zeros((4, 2 * nts))
    A_uu = np.zeros((6, 6))
    A_ut = np.zeros((6, 2 * nts))
    D_L = np.zeros((2 * nts, 4))
    D_p = np.zeros(2 * nts)
    D_u = np.zeros((2 * nts, 6))
    D_t = np.zeros((2 * nts, 2 * nts))
    C_t = np.concatenate([w[0], w[1]])
    for a in range(2):
        ra = slice(a * nts, (a + 1) * nts)
        ua = slice(3 * a, 3 * a + 3)
        for b in range(2):
            A_Lt[2 * a + b, ra] = -w[b]
            D_L[ra, 2 * a + b] = w[b]
        A_uu[ua, ua] = grp.A[i]
        A_ut[ua, ra] = -tau * G.T
        D_p[ra] = -w[a]
        D_u[ra, ua] = -tau * G
        D_t[ra, ra] = np.diag(tau * grp.mass[i])
    return PieceSystem(int(grp.pieces[i]), side, grp.dofs[i].ravel(), A_LL, A_Lt, A_uu, A_ut,
                       grp.load[i].ravel(), C_t, D_L, D_p, D_u, D_t)


def assemble_local(cut: CutMesh, dofmap: DofMap, data: ProblemData, cell: int,
                   degree: int = 4) -> LocalSystem:
    """Dense local blocks of every piece of ``cell``.

    Rows of the trace equations are ``D_L L + D_p p + D_u u + D_t t``;
    velocity rows are ``A_uu u + A_ut t = b_u``; gradient rows are
    ``diag(A_LL) L + A_Lt t = 0``.  In curved mode exterior pieces are
    absent, so a fully exterior cell has no pieces.
    """
    pieces = cut.pieces_of_cell(cell)
    out = LocalSystem(int(cell), [])
    if len(pieces) == 0:
        return out
    for grp in piece_groups(cut, dofmap, data, pieces, degree):
        for i in range(len(grp.pieces)):
            out.pieces.append(_dense_piece(grp, i, int(cut.piece_side[grp.pieces[i]])))
    out.pieces.sort(key=lambda ps: ps.piece)
    return out


def assemble_local_curved(cut: CutMesh, dofmap: DofMap, data: ProblemData, cell: int,
                          degree: int = 4) -> LocalSystem:
    if not cut.curved:
        raise ValueError("cut mesh was not built in curved mode")
    return assemble_local(cut, dofmap, data, cell, degree)


def assemble_rhs(cut: CutMesh, dofmap: DofMap, data: ProblemData, cell: int, degree: int = 4):
    """Volume loads (f, v) of the pieces of ``cell``: {piece: (2, 3)}."""
    return {ps.piece: ps.b_u.reshape(2, 3) for ps in assemble_local(cut, dofmap, data, cell, degree).pieces}
