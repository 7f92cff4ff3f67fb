"""Static condensation, global solve and reconstruction.

Eliminating (L, u) piece by piece leaves a symmetric saddle-point system in
``[p | u_hat | u_tilde | lambda]``:

    K t - W p          = g_N + tau G A^-1 b
    -W^T t - |K| lambda = 0
    -sum |K| p          = 0

where ``K = Z + tau M - tau^2 G A^-1 G^T`` per piece and component.
Essential traces are moved to the right-hand side before factorization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (PieceGroup, ProblemData, essential_values, piece_groups,
                       traction_load)
from .levelset import CutMesh
from .space import DofMap

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class CondensedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    essential: np.ndarray  # bool mask
    x_essential: np.ndarray  # prescribed values, zero on free dofs
    groups: list[PieceGroup]
    dofmap: DofMap

    @property
    def shape(self):
        return self.matrix.shape


@dataclass
class Solution:
    """Discrete fields.

    ``L`` (P, 2, 2), ``u`` (P, 2, 3) in the parent-cell P1 basis, ``p`` (P,),
    ``x`` the condensed vector ``[p | u_hat | u_tilde | lambda]``.
    """

    cut: CutMesh
    dofmap: DofMap
    L: np.ndarray
    u: np.ndarray
    p: np.ndarray
    x: np.ndarray
    residual: float = 0.0

    @property
    def multiplier(self) -> float:
        return float(self.x[self.dofmap.multiplier])

    @property
    def u_hat(self) -> np.ndarray:
        """(Nfp, 2)"""
        d = self.dofmap
        return self.x[d.hat_offset:d.tilde_offset].reshape(-1, 2)

    @property
    def u_tilde(self) -> np.ndarray:
        """(I, 2, m + 1)"""
        d = self.dofmap
        return self.x[d.tilde_offset:d.multiplier].reshape(-1, 2, d.nb_interface)

    def monolithic_vector(self) -> np.ndarray:
        return np.concatenate([self.L.ravel(), self.u.ravel(), self.x])


def _local_schur(grp: PieceGroup):
    Ainv = np.linalg.inv(grp.A)
    GA = np.einsum("prj,pjk->prk", grp.G, Ainv)
    w = grp.w
    tau = grp.tau[:, None, None]
    K = (grp.nu / grp.area)[:, None, None] * np.einsum("pbr,pbs->prs", w, w)
    K = K - tau**2 * np.einsum("prk,psk->prs", GA, grp.G)
    idx = np.arange(K.shape[1])
    K[:, idx, idx] += grp.tau[:, None] * grp.mass
    load = tau * np.einsum("prk,pak->par", GA, grp.load)  # (Pg, 2, nts)
    return Ainv, K, load


def _restrict(A: sp.spmatrix, b: np.ndarray, essential: np.ndarray, xe: np.ndarray):
    free = ~essential
    A = A.tocsc()
    rhs = b[free] - A[free][:, essential] @ xe[essential]
    return A[free][:, free], rhs, free


def condense(cut: CutMesh, dofmap: DofMap, data: ProblemData, groups=None,
             degree: int = 4) -> CondensedSystem:
    """Assemble the condensed global system from the batched local blocks."""
    if groups is None:
        groups = piece_groups(cut, dofmap, data, degree=degree)
    n = dofmap.num_condensed
    rows, cols, vals = [], [], []
    rhs = traction_load(cut, dofmap, data)
    lam = dofmap.multiplier
    for grp in groups:
        _, K, load = _local_schur(grp)
        w = grp.w
        pid = grp.pieces
        nts = K.shape[1]
        for a in range(2):
            d = grp.dofs[:, a]  # (Pg, nts)
            rows.append(np.repeat(d, nts, axis=1).ravel())
            cols.append(np.tile(d, (1, nts)).ravel())
            vals.append(K.ravel())
            pr = np.broadcast_to(pid[:, None], d.shape).ravel()
            rows += [d.ravel(), pr]
            cols += [pr, d.ravel()]
            vals += [-w[:, a].ravel(), -w[:, a].ravel()]
            np.add.at(rhs, d.ravel(), load[:, a].ravel())
        rows += [pid, np.full(len(pid), lam)]
        cols += [np.full(len(pid), lam), pid]
        vals += [-grp.area, -grp.area]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    return CondensedSystem(A, rhs, dofmap.essential, essential_values(cut, dofmap, data),
                           groups, dofmap)


def _equilibrate(A: sp.spmatrix):
    """Row then column max-norm scalings R, C for ``R A C``."""
    A = abs(A.tocsr())
    r = 1.0 / np.maximum(A.max(axis=1).toarray().ravel(), np.finfo(float).tiny)
    c = 1.0 / np.maximum((sp.diags(r) @ A).max(axis=0).toarray().ravel(), np.finfo(float).tiny)
    return r, c


def _direct_solve(A: sp.spmatrix, b: np.ndarray, what: str, scale: bool = False,
                  check: bool = True) -> tuple[np.ndarray, float]:
    if scale:
        r, c = _equilibrate(A)
        As = sp.diags(r) @ A @ sp.diags(c)
        y, _ = _direct_solve(As, r * b, what)
        x = c * y
        bn = np.linalg.norm(b)
        res = np.linalg.norm(A @ x - b) / bn if bn > 0 else float(np.linalg.norm(A @ x - b))
        return x, float(res)
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SolverError(f"{what}: singular factorization ({exc}); check the interface "
                          "assumptions or the pressure constraint") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: non-finite solution")
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b) / bn if bn > 0 else float(np.linalg.norm(A @ x - b))
    if res > RESIDUAL_TOL:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b) / bn if bn > 0 else float(np.linalg.norm(A @ x - b))
    if check and res > RESIDUAL_TOL:
        raise SolverError(f"{what}: relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    return x, float(res)


def recover(cut: CutMesh, dofmap: DofMap, groups, x: np.ndarray):
    """(L, u) from the condensed vector, piece by piece."""
    P = cut.num_pieces
    L = np.zeros((P, 2, 2))
    u = np.zeros((P, 2, 3))
    for grp in groups:
        Ainv = np.linalg.inv(grp.A)
        t = x[grp.dofs]  # (Pg, 2, nts)
        w = grp.w
        L[grp.pieces] = (grp.nu / grp.area)[:, None, None] * np.einsum("pbr,par->pab", w, t)
        rhs = grp.tau[:, None, None] * np.einsum("prj,par->paj", grp.G, t) + grp.load
        u[grp.pieces] = np.einsum("pjk,pak->paj", Ainv, rhs)
    return L, u


def _bordered_solve(A: sp.spmatrix, b: np.ndarray, num_p: int, pin: int) -> tuple[np.ndarray, float]:
    """Solve the system whose last row/column is the mean-value multiplier.

    The dense multiplier row ruins the fill of a sparse LU, so it is handled
    by block elimination instead: the remaining matrix ``A0`` is singular
    only along constant pressures ``z``, hence ``lambda = z.b / z.c``, the
    consistent system ``A0 x = b - c lambda`` is solved with one pressure
    pinned, and ``x`` is shifted along ``z`` to satisfy the multiplier row.
    """
    A = A.tocsc()
    n = A.shape[0] - 1
    A0 = A[:n, :n]
    c = A[:n, n].toarray().ravel()
    cl = A[n, :n].toarray().ravel()
    z = np.zeros(n)
    z[:num_p] = 1.0
    lam = float(z @ b[:n]) / float(z @ c)
    keep = np.ones(n)
    keep[pin] = 0.0
    D = sp.diags(keep)
    pinned = (D @ A0 @ D + sp.diags(1.0 - keep)).tocsc()
    rhs = keep * (b[:n] - c * lam)
    x0, _ = _direct_solve(pinned, rhs, "condensed system", check=False)
    x0 = x0 + (b[n] - cl @ x0) / (cl @ z) * z
    x = np.append(x0, lam)
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    res = r / bn if bn > 0 else float(r)
    if res > RESIDUAL_TOL:
        raise SolverError(f"condensed system: relative residual {res:.3e} exceeds {RESIDUAL_TOL:g} "
                          "(the pressure may have more than one spurious mode)")
    return x, float(res)


def solve(system: CondensedSystem, cut: CutMesh) -> Solution:
    d = system.dofmap
    A, b, free = _restrict(system.matrix, system.rhs, system.essential, system.x_essential)
    pin = int(np.argmax(cut.piece_area)) if d.num_pieces else 0
    xf, res = _bordered_solve(A, b, d.num_pieces, pin)
    x = system.x_essential.copy()
    x[free] = xf
    L, u = recover(cut, d, system.groups, x)
    log.debug("condensed solve: %d unknowns, residual %.2e", len(xf), res)
    return Solution(cut, d, L, u, x[: d.num_pieces].copy(), x, res)


def solve_problem(cut: CutMesh, dofmap: DofMap, data: ProblemData, degree: int = 4) -> Solution:
    return solve(condense(cut, dofmap, data, degree=degree), cut)


def monolithic_matrix(cut: CutMesh, dofmap: DofMap, data: ProblemData, groups=None, degree: int = 4):
    """Full system over ``[L | u | p | u_hat | u_tilde | lambda]`` built from the
    raw local equations, with nothing eliminated."""
    if groups is None:
        groups = piece_groups(cut, dofmap, data, degree=degree)
    NL, NU = dofmap.num_L, dofmap.num_u
    off = NL + NU
    n = dofmap.num_total
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    rhs[off:] = traction_load(cut, dofmap, data)
    lam = off + dofmap.multiplier

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(r, c, v)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    for grp in groups:
        pid = grp.pieces
        w = grp.w  # (Pg, 2, nts)
        G = grp.G
        tau = grp.tau
        nts = G.shape[1]
        pdof = off + pid
        for a in range(2):
            t = off + grp.dofs[:, a]  # (Pg, nts)
            u_a = NL + 6 * pid[:, None] + 3 * a + np.arange(3)  # (Pg, 3)
            for b in range(2):
                Lab = 4 * pid + 2 * a + b
                add(Lab, Lab, grp.area / grp.nu)
                add(Lab[:, None], t, -w[:, b])
                add(t, Lab[:, None], w[:, b])
            # velocity rows
            add(u_a[:, :, None], u_a[:, None, :], grp.A)
            add(u_a[:, :, None], t[:, None, :], -tau[:, None, None] * np.swapaxes(G, 1, 2))
            rhs[u_a.ravel()] += grp.load[:, a].ravel()
            # pressure row
            add(pdof[:, None], t, w[:, a])
            # trace rows
            add(t, pdof[:, None], -w[:, a])
            add(t[:, :, None], u_a[:, None, :], -tau[:, None, None] * G)
            add(t, t, tau[:, None] * grp.mass)
        add(pdof, lam, grp.area)
        add(lam, pdof, grp.area)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    essential = np.zeros(n, dtype=bool)
    essential[off:] = dofmap.essential
    xe = np.zeros(n)
    xe[off:] = essential_values(cut, dofmap, data)
    return A, rhs, essential, xe


def monolithic_solve(cut: CutMesh, dofmap: DofMap, data: ProblemData, degree: int = 4) -> Solution:
    A, rhs, essential, xe = monolithic_matrix(cut, dofmap, data, degree=degree)
    Af, b, free = _restrict(A, rhs, essential, xe)
    xf, res = _direct_solve(Af, b, "monolithic system", scale=True)
    x = xe.copy()
    x[free] = xf
    NL, NU = dofmap.num_L, dofmap.num_u
    P = dofmap.num_pieces
    xc = x[NL + NU:]
    return Solution(cut, dofmap, x[:NL].reshape(P, 2, 2), x[NL:NL + NU].reshape(P, 2, 3),
                    xc[:P].copy(), xc, res)


def piece_flux(solution: Solution) -> np.ndarray:
    """Net outflow of the traces, sum_s int(t . n), for every piece."""
    out = np.zeros(solution.dofmap.num_pieces)
    groups = piece_groups(solution.cut, solution.dofmap, ProblemData())
    for grp in groups:
        t = solution.x[grp.dofs]
        out[grp.pieces] = np.einsum("par,par->p", grp.w, t)
    return out
