"""Error norms, the energy seminorm, observed orders and table output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import ProblemData, _volume_terms, piece_groups, traction_load
from .problems import ProblemSpec
from .solver import Solution
from .space import cell_basis, piece_moments, project_cells, project_segments

CSV_COLUMNS = ["n", "err_u", "ord_u", "err_L", "ord_L", "err_gradu", "ord_gradu",
               "err_p", "ord_p", "energy", "dofs", "seconds"]
ERROR_KEYS = ("u", "L", "gradu", "p")


@dataclass
class ErrorRow:
    n: int
    err_u: float
    err_L: float
    err_gradu: float
    err_p: float
    energy: float = float("nan")
    dofs: int = 0
    seconds: float = 0.0
    consistency: float = float("nan")  # ||L_h - nu grad_h u_h|| / ||L||
    multiplier: float = 0.0
    max_piece_flux: float = 0.0
    orders: dict = field(default_factory=dict)

    def error(self, key: str) -> float:
        return getattr(self, f"err_{key}")


def _rel(num: float, den: float) -> float:
    return math.sqrt(num / den) if den >= 1e-28 else math.sqrt(num)


def compute_errors(solution: Solution, spec: ProblemSpec, degree: int = 8) -> ErrorRow:
    """Relative L2 errors of u, L, grad u and p over the physical pieces.

    Both pressures are shifted to zero mean with the same quadrature before
    comparing.  When an exact norm vanishes the absolute error is reported.
    """
    cut = solution.cut
    pts, w, owner, phi = piece_moments(cut, degree)
    side = cut.piece_side[owner]
    x, y = pts[:, 0], pts[:, 1]
    u_ex = np.zeros((2, len(w)))
    g_ex = np.zeros((2, 2, len(w)))
    p_ex = np.zeros(len(w))
    nu_q = np.asarray(spec.nu)[side - 1]
    for s in np.unique(side):
        sel = side == s
        u_ex[:, sel] = spec.u(int(s), x[sel], y[sel])
        g_ex[:, :, sel] = spec.grad(int(s), x[sel], y[sel])
        p_ex[sel] = spec.p(int(s), x[sel], y[sel])
    L_ex = nu_q * g_ex

    u_h = np.einsum("qaj,jq->aq", solution.u[owner], phi)
    h = cut.piece_h[owner]
    grad_h = np.stack([solution.u[owner, :, 1] / h[:, None], solution.u[owner, :, 2] / h[:, None]], axis=2)
    grad_h = np.moveaxis(grad_h, 0, -1)  # (2, 2, q)
    L_h = np.moveaxis(solution.L[owner], 0, -1)
    p_h = solution.p[owner]

    area = w.sum()
    p_ex = p_ex - np.dot(w, p_ex) / area
    p_h = p_h - np.dot(w, p_h) / area

    def sq(a):
        return float(np.dot(w, (a**2).reshape(-1, len(w)).sum(axis=0)))

    row = ErrorRow(
        n=int(cut.mesh.n),
        err_u=_rel(sq(u_ex - u_h), sq(u_ex)),
        err_L=_rel(sq(L_ex - L_h), sq(L_ex)),
        err_gradu=_rel(sq(g_ex - grad_h), sq(g_ex)),
        err_p=_rel(sq(p_ex - p_h), sq(p_ex)),
        consistency=_rel(sq(L_h - nu_q * grad_h), sq(L_ex)),
        multiplier=solution.multiplier,
    )
    return row


# ---------------------------------------------------------------------------
# energy seminorm
# ---------------------------------------------------------------------------


def seminorm_terms(solution: Solution, data: ProblemData, L, u, x) -> np.ndarray:
    """The four squared terms of the energy seminorm of ``(L, u, traces)``.

    ``L`` (P, 2, 2), ``u`` (P, 2, 3) and the condensed vector ``x`` whose
    trace entries are used.
    """
    cut, dofmap = solution.cut, solution.dofmap
    groups = piece_groups(cut, dofmap, data)
    Mvol, _ = _volume_terms(cut, data, 2)
    nu = np.asarray(data.nu)[cut.piece_side - 1]
    alpha = np.asarray(data.alpha)[cut.piece_side - 1]
    t_L = float(np.sum(cut.piece_area / nu * np.sum(L**2, axis=(1, 2))))
    t_u = float(np.sum(alpha * np.einsum("paj,pjk,pak->p", u, Mvol, u)))
    t_face = t_if = 0.0
    for grp in groups:
        t = x[grp.dofs]  # (Pg, 2, nts)
        gu = np.einsum("prj,paj->par", grp.G, u[grp.pieces])
        mism = (gu - grp.mass[:, None, :] * t) ** 2 / grp.mass[:, None, :]
        contrib = grp.tau[:, None, None] * mism
        is_face = np.asarray(cut.seg_kind[grp.segs[:, grp.row_seg]] == 0)
        t_face += float(np.sum(contrib * is_face[:, None, :]))
        t_if += float(np.sum(contrib * ~is_face[:, None, :]))
    return np.array([t_L, t_u, t_face, t_if])


def exact_projections(solution: Solution, spec: ProblemSpec, degree: int = 8):
    """(Q0 L, Q1 u, trace vector of Q0^b u and Q_m^b u)."""
    cut, dofmap = solution.cut, solution.dofmap
    QL = project_cells(cut, lambda s, x, y: spec.L(s, x, y).reshape(4, -1), 0, degree)
    QL = QL[..., 0].reshape(-1, 2, 2)
    Qu = project_cells(cut, spec.u, 1, degree)
    xt = np.zeros(dofmap.num_condensed)
    if cut.num_face_pieces:
        for s in np.unique(cut.fp_side):
            sel = np.flatnonzero(cut.fp_side == s)
            c = project_segments(cut.fp_p0[sel], cut.fp_p1[sel], lambda x, y, s=s: spec.u(int(s), x, y), 0, degree)
            xt[dofmap.face_dofs(sel)] = c[..., 0]
    if cut.num_interfaces:
        def trace(x, y):
            if spec.curved:
                return spec.u(2, x, y)
            return 0.5 * (spec.u(1, x, y) + spec.u(2, x, y))
        c = project_segments(cut.if_p0, cut.if_p1, trace, dofmap.m, degree)
        xt[dofmap.interface_dofs(np.arange(cut.num_interfaces))] = c
    return QL, Qu, xt


def energy_seminorm(solution: Solution, spec: ProblemSpec, degree: int = 8, terms: bool = False):
    """Seminorm of (L_h - Q0 L, u_h - Q1 u, u_hat - Q0^b u, u_tilde - Q_m^b u)."""
    QL, Qu, xt = exact_projections(solution, spec, degree)
    parts = seminorm_terms(solution, spec.data(), solution.L - QL, solution.u - Qu, solution.x - xt)
    return parts if terms else float(np.sqrt(parts.sum()))


def energy_identity(solution: Solution, data: ProblemData) -> tuple[float, float]:
    """Both sides of the discrete energy identity for homogeneous Dirichlet data."""
    lhs = seminorm_terms(solution, data, solution.L, solution.u, solution.x).sum()
    _, load = _volume_terms(solution.cut, data, 4)
    rhs = float(np.sum(load * solution.u)) + float(traction_load(solution.cut, solution.dofmap, data) @ solution.x)
    return float(lhs), rhs


# ---------------------------------------------------------------------------
# orders and tables
# ---------------------------------------------------------------------------


def is_halving(levels) -> bool:
    levels = list(levels)
    return len(levels) >= 2 and all(b == 2 * a for a, b in zip(levels, levels[1:]))


def order(coarse: float, fine: float) -> float:
    return math.log2(coarse / fine)


def convergence_orders(rows: list[ErrorRow]) -> tuple[list[ErrorRow], str]:
    """Fill ``row.orders`` with log2 ratios of consecutive levels.

    Orders are left empty (with an explanatory note) unless every level
    doubles the previous one.
    """
    if len(rows) < 2:
        return rows, "orders need at least two levels"
    if not is_halving(r.n for r in rows):
        for r in rows:
            r.orders = {}
        return rows, "levels do not halve the mesh size; orders omitted"
    rows[0].orders = {}
    for prev, cur in zip(rows, rows[1:]):
        cur.orders = {k: order(prev.error(k), cur.error(k)) for k in ERROR_KEYS}
    return rows, ""


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def to_csv(rows: list[ErrorRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([r.n, _fmt(r.err_u), _fmt(r.orders.get("u")), _fmt(r.err_L), _fmt(r.orders.get("L")),
                         _fmt(r.err_gradu), _fmt(r.orders.get("gradu")), _fmt(r.err_p), _fmt(r.orders.get("p")),
                         _fmt(r.energy), r.dofs, f"{r.seconds:.3f}"])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def to_markdown(rows: list[ErrorRow], title: str = "", note: str = "") -> str:
    head = ["mesh", "‖u−u_h‖/‖u‖", "order", "‖L−L_h‖/‖L‖", "order",
            "‖∇u−∇_h u_h‖/‖∇u‖", "order", "‖p−p_h‖/‖p‖", "order"]
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines += ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        cells = [f"{r.n}×{r.n}"]
        for k in ERROR_KEYS:
            cells.append(f"{r.error(k):.4E}")
            o = r.orders.get(k)
            cells.append("--" if o is None else f"{o:.2f}")
        lines.append("| " + " | ".join(cells) + " |")
    if note:
        lines += ["", f"_{note}_"]
    return "\n".join(lines) + "\n"


def plot_convergence(rows: list[ErrorRow], path, title: str = "") -> None:
    """Log-log plot of the four relative errors against the mesh level."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = np.array([r.n for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    labels = {"u": r"$u$", "L": r"$L$", "gradu": r"$\nabla u$", "p": r"$p$"}
    for k, mk in zip(ERROR_KEYS, "osd^"):
        ax.loglog(n, [r.error(k) for r in rows], marker=mk, label=labels[k])
    if len(n) >= 2:
        e0 = rows[0].err_L
        ax.loglog(n, e0 * (n[0] / n), "k--", lw=0.8, label="slope 1")
        e0 = rows[0].err_u
        ax.loglog(n, e0 * (n[0] / n) ** 2, "k:", lw=0.8, label="slope 2")
    ax.set_xlabel("N (N×N mesh)")
    ax.set_ylabel("relative L2 error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def row_dict(row: ErrorRow) -> dict:
    return asdict(row)
