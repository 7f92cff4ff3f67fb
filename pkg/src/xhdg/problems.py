"""Manufactured-solution problems.

Every problem stores its exact velocity, velocity gradient and pressure per
side, with the body force differentiated by hand.  Side 1 is where the level
set is positive; for curved-domain problems only side 2 (the interior)
exists.  :func:`verify_spec` cross-checks the hand-derived data against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import levelset as lsm
from .assembly import ProblemData, interface_projection
from .levelset import CutMesh, LevelSet
from .quadrature import gauss_legendre

SideField = Callable[[int, np.ndarray, np.ndarray], np.ndarray]

EX2_SHIFT = 1.3798535909816816
EX3_B0 = 0.4031
DISC_CENTER = (0.5, 0.5)
DISC_RADIUS = np.sqrt(3.0) / 4.0


@dataclass
class ProblemSpec:
    """Geometry, coefficients and exact solution of a test problem.

    ``u(side, x, y)`` -> (2, n); ``grad(side, x, y)`` -> (2, 2, n) with
    ``grad[a, b] = d u_a / d x_b``; ``p(side, x, y)`` -> (n,);
    ``f(side, x, y)`` -> (2, n).
    """

    name: str
    domain: tuple[float, float, float, float]
    levelset: LevelSet | None
    nu: tuple[float, float]
    alpha: tuple[float, float]
    u: SideField
    grad: SideField
    p: SideField
    f: SideField
    curved: bool = False
    center: tuple[float, float] = (0.0, 0.0)
    description: str = ""
    coefficient_sets: list = field(default_factory=list)

    @property
    def sides(self) -> tuple[int, ...]:
        return (2,) if self.curved else (1, 2)

    def L(self, side, x, y):
        return self.nu[side - 1] * self.grad(side, x, y)

    def stress(self, side, x, y):
        s = self.L(side, x, y)
        pv = self.p(side, x, y)
        s[0, 0] -= pv
        s[1, 1] -= pv
        return s

    def g_D(self, side, x, y):
        return self.u(side, x, y)

    def g_N(self, x, y, n):
        """Traction jump (sigma_1 - sigma_2) n for normals pointing into side 2."""
        n = np.asarray(n, dtype=float)
        jump = self.stress(1, x, y) - self.stress(2, x, y)
        return np.einsum("abq,bq->aq", jump.reshape(2, 2, -1), n.reshape(2, -1)).reshape((2,) + np.shape(x))

    def data(self) -> ProblemData:
        return ProblemData(self.nu, self.alpha, self.f, self.g_D,
                           None if self.curved else self.g_N, self.curved)

    def with_coefficients(self, nu=None, alpha=None) -> "ProblemSpec":
        """Rebuild with new coefficients (the exact fields may depend on them)."""
        return builtin(self.name, nu=nu if nu is not None else self.nu,
                       alpha=alpha if alpha is not None else self.alpha)


def _pair(v) -> tuple[float, float]:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1:
        return float(v[0]), float(v[0])
    if v.size != 2:
        raise ValueError(f"expected one or two coefficients, got {v.size}")
    return float(v[0]), float(v[1])


def _ex1(nu, alpha):
    def u(s, x, y):
        q = x * x + y * y - 0.3
        return np.stack([y * q, -x * q]) / nu[s - 1]

    def grad(s, x, y):
        q = x * x + y * y - 0.3
        return np.array([[2 * x * y, q + 2 * y * y], [-q - 2 * x * x, -2 * x * y]]) / nu[s - 1]

    def p(s, x, y):
        return (x**3 - y**3) / 10.0

    def f(s, x, y):
        a = alpha[s - 1]
        uu = u(s, x, y)
        return np.stack([-8 * y + 0.3 * x * x + a * uu[0], 8 * x - 0.3 * y * y + a * uu[1]])

    return ProblemSpec("ex1", (-1.0, 1.0, -1.0, 1.0), lsm.circle((0.0, 0.0), np.sqrt(0.3)), nu, alpha,
                       u, grad, p, f, description="square with circular interface, zero traction jump",
                       coefficient_sets=[((1.0, 1e-3), (0.0, 0.0)), ((1e-3, 1.0), (0.0, 0.0)),
                                         ((1e-3, 1e-3), (0.0, 0.0))])


def _ex2(nu, alpha):
    def u(s, x, y):
        sn = np.sin(x * x + y * y - 0.3)
        return np.stack([1 + y * sn / nu[s - 1], 2 - x * sn / nu[s - 1]])

    def grad(s, x, y):
        q = x * x + y * y - 0.3
        sn, cs = np.sin(q), np.cos(q)
        g = np.array([[2 * x * y * cs, sn + 2 * y * y * cs],
                      [-sn - 2 * x * x * cs, -2 * x * y * cs]])
        return g / nu[s - 1]

    def p(s, x, y):
        if s == 1:
            return np.exp(x + y) - EX2_SHIFT
        return np.sqrt(1 + x * x + y * y) - EX2_SHIFT

    def f(s, x, y):
        r2 = x * x + y * y
        sn, cs = np.sin(r2 - 0.3), np.cos(r2 - 0.3)
        lap1 = 8 * y * cs - 4 * y * r2 * sn
        lap2 = -(8 * x * cs - 4 * x * r2 * sn)
        if s == 1:
            e = np.exp(x + y)
            dp = (e, e)
        else:
            rt = np.sqrt(1 + r2)
            dp = (x / rt, y / rt)
        a = alpha[s - 1]
        uu = u(s, x, y)
        return np.stack([-lap1 + dp[0] + a * uu[0], -lap2 + dp[1] + a * uu[1]])

    return ProblemSpec("ex2", (-1.0, 1.0, -1.0, 1.0), lsm.circle((0.0, 0.0), np.sqrt(0.3)), nu, alpha,
                       u, grad, p, f, description="square with circular interface, nonzero traction jump",
                       coefficient_sets=[((1.0, 1e-3), (0.0, 0.0)), ((1e-2, 1.0), (1.0, 0.0))])


def ex3_lambda(nu: float) -> float:
    return 1.0 / (2.0 * nu) - np.sqrt(1.0 / (4.0 * nu * nu) + 4.0 * np.pi**2)


def _ex3(nu, alpha):
    b0 = EX3_B0
    k = np.pi / b0
    lam = (ex3_lambda(nu[0]), ex3_lambda(nu[1]))
    shift = (-b0 * (np.exp(2 * lam[1]) / (4 * lam[1]) - 1)
             - (1 - b0) * (np.exp(2 * lam[0]) / (4 * lam[0]) - 1))

    def u(s, x, y):
        u1 = 1 - np.exp(lam[s - 1]) * np.sin(k * y)
        return np.stack([u1 + 0 * x, np.zeros_like(u1 + 0 * x)])

    def grad(s, x, y):
        z = np.zeros_like(x + y)
        return np.array([[z, -np.exp(lam[s - 1]) * k * np.cos(k * y) + z], [z, z]])

    def p(s, x, y):
        return 0.5 * np.exp(2 * lam[s - 1] * x) + shift + 0 * y

    def f(s, x, y):
        ls = lam[s - 1]
        uu = u(s, x, y)
        f1 = -nu[s - 1] * np.exp(ls) * k * k * np.sin(k * y) + ls * np.exp(2 * ls * x) + alpha[s - 1] * uu[0]
        return np.stack([f1, alpha[s - 1] * uu[1]])

    return ProblemSpec("ex3", (0.0, 1.0, 0.0, 1.0), lsm.halfplane(0.0, 1.0, -b0), nu, alpha,
                       u, grad, p, f, description="unit square with straight interface y = b0",
                       coefficient_sets=[((1.0, 1e-2), (0.0, 0.0)), ((1.0, 1e-2), (0.0, 1.0))])


def _ex4(nu, alpha):
    cx, cy = DISC_CENTER
    R2 = DISC_RADIUS**2

    def u(s, x, y):
        X, Y = x - cx, y - cy
        q = X * X + Y * Y - R2
        return np.stack([Y * q, -X * q])

    def grad(s, x, y):
        X, Y = x - cx, y - cy
        q = X * X + Y * Y - R2
        return np.array([[2 * X * Y, q + 2 * Y * Y], [-q - 2 * X * X, -2 * X * Y]])

    def p(s, x, y):
        return (x**3 - y**3) / 10.0

    def f(s, x, y):
        X, Y = x - cx, y - cy
        v, a = nu[s - 1], alpha[s - 1]
        uu = u(s, x, y)
        return np.stack([-8 * v * Y + 0.3 * x * x + a * uu[0], 8 * v * X - 0.3 * y * y + a * uu[1]])

    return ProblemSpec("ex4", (0.0, 1.0, 0.0, 1.0), lsm.circle(DISC_CENTER, DISC_RADIUS), nu, alpha,
                       u, grad, p, f, curved=True, center=DISC_CENTER,
                       description="disc domain, homogeneous boundary data",
                       coefficient_sets=[((1.0, 1.0), (0.0, 0.0)), ((1.0, 1.0), (1.0, 1.0)),
                                         ((0.01, 0.01), (1.0, 1.0))])


def _ex5(nu, alpha):
    def u(s, x, y):
        return np.stack([x * x * y, -x * y * y])

    def grad(s, x, y):
        return np.array([[2 * x * y, x * x], [-y * y, -2 * x * y]])

    def p(s, x, y):
        return (x**3 - y**3) / 3.0

    def f(s, x, y):
        v, a = nu[s - 1], alpha[s - 1]
        return np.stack([-2 * v * y + x * x + a * x * x * y, 2 * v * x - y * y - a * x * y * y])

    return ProblemSpec("ex5", (-1.0, 1.0, -1.0, 1.0), lsm.five_star(), nu, alpha,
                       u, grad, p, f, curved=True, center=(0.0, 0.0),
                       description="five-star domain, nonhomogeneous boundary data",
                       coefficient_sets=[((1.0, 1.0), (0.0, 0.0)), ((1.0, 1.0), (1.0, 1.0)),
                                         ((0.01, 0.01), (1.0, 1.0))])


_BUILDERS = {"ex1": _ex1, "ex2": _ex2, "ex3": _ex3, "ex4": _ex4, "ex5": _ex5}
PROBLEMS = tuple(_BUILDERS)


def builtin(name: str, nu=None, alpha=None) -> ProblemSpec:
    """Built-in problem ``ex1`` ... ``ex5``; ``nu``/``alpha`` override the
    first coefficient set (a scalar applies to both sides)."""
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    default = build((1.0, 1.0), (0.0, 0.0)).coefficient_sets[0]
    nu = _pair(default[0] if nu is None else nu)
    alpha = _pair(default[1] if alpha is None else alpha)
    if min(nu) <= 0 or min(alpha) < 0:
        raise ValueError(f"need nu > 0 and alpha >= 0, got nu={nu}, alpha={alpha}")
    return build(nu, alpha)


def derive_interface_data(spec: ProblemSpec, cut: CutMesh, m: int = 0, degree: int = 8) -> np.ndarray:
    """P_m coefficients (I, 2, m + 1) of the data carried by interface segments.

    Interface problems: the traction jump ``g_N`` evaluated with the chord
    normal.  Curved domains: the boundary velocity ``g_D``.  The data is the
    linear interpolant of end point values unless the level set is affine.
    """
    exact = bool(cut.levelset is not None and cut.levelset.affine)
    if spec.curved:
        def fn(x, y, n):
            return spec.g_D(2, x, y)
    else:
        fn = spec.g_N
    return interface_projection(cut, fn, m, exact, degree)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class SpecReport:
    name: str
    pde_residual: float
    gradient_residual: float
    divergence: float
    velocity_jump: float
    traction_check: float
    compatibility: float
    pressure_mean: float
    tol: float

    @property
    def ok(self) -> bool:
        return max(self.pde_residual, self.gradient_residual, self.divergence,
                   self.velocity_jump, self.traction_check, abs(self.compatibility)) <= self.tol


def _sample_side(spec: ProblemSpec, side: int, count: int, rng) -> np.ndarray:
    a, b, c, d = spec.domain
    pts = np.empty((0, 2))
    while len(pts) < count:
        cand = rng.uniform((a, c), (b, d), size=(2 * count, 2))
        if spec.levelset is not None:
            val = spec.levelset(cand[:, 0], cand[:, 1])
            keep = val > 1e-3 if side == 1 else val < -1e-3
            cand = cand[keep]
        pts = np.vstack([pts, cand])
    return pts[:count]


def _boundary_points(spec: ProblemSpec, count: int):
    """Points, unit outward normals and weights of a quadrature on the boundary."""
    if not spec.curved:
        a, b, c, d = spec.domain
        rule = gauss_legendre(10)
        k = max(count // 40, 1)
        t = (np.arange(k)[:, None] + rule.points[None, :]).ravel() / k
        w = np.tile(rule.weights, k) / k
        one = np.ones_like(t)
        sides = [((a + (b - a) * t, c * one), (0, -1), b - a), ((b * one, c + (d - c) * t), (1, 0), d - c),
                 ((a + (b - a) * t, d * one), (0, 1), b - a), ((a * one, c + (d - c) * t), (-1, 0), d - c)]
        pts, nrm, wts = [], [], []
        for (x, y), n, length in sides:
            pts.append(np.column_stack([x, y]))
            nrm.append(np.tile(n, (len(t), 1)))
            wts.append(w * length)
        return np.vstack(pts), np.vstack(nrm).astype(float), np.concatenate(wts)
    # star-shaped curved boundary: radial roots on a fine polygon
    theta = np.linspace(0, 2 * np.pi, count, endpoint=False)
    cx, cy = spec.center
    d = np.column_stack([np.cos(theta), np.sin(theta)])
    lo = np.zeros(count)
    hi = np.full(count, max(spec.domain[1] - spec.domain[0], spec.domain[3] - spec.domain[2]))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = spec.levelset(cx + mid * d[:, 0], cy + mid * d[:, 1]) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    poly = np.column_stack([cx + lo * d[:, 0], cy + lo * d[:, 1]])
    nxt = np.roll(poly, -1, axis=0)
    seg = nxt - poly
    length = np.hypot(seg[:, 0], seg[:, 1])
    nrm = np.column_stack([seg[:, 1], -seg[:, 0]]) / length[:, None]
    return 0.5 * (poly + nxt), nrm, length


def verify_spec(spec: ProblemSpec, samples: int = 2000, tol: float = 1e-8, seed: int = 0) -> SpecReport:
    """Residual checks of the hand-derived data at random points.

    The momentum residual uses centred differences of the analytic gradient
    and pressure; residuals are relative to the size of ``f``.
    """
    rng = np.random.default_rng(seed)
    eps = 1e-5
    pde = gres = div = 0.0
    for side in spec.sides:
        x, y = _sample_side(spec, side, samples, rng).T
        nu, al = spec.nu[side - 1], spec.alpha[side - 1]
        f = spec.f(side, x, y)
        g = spec.grad(side, x, y)
        dgx = (spec.grad(side, x + eps, y) - spec.grad(side, x - eps, y)) / (2 * eps)
        dgy = (spec.grad(side, x, y + eps) - spec.grad(side, x, y - eps)) / (2 * eps)
        dpx = (spec.p(side, x + eps, y) - spec.p(side, x - eps, y)) / (2 * eps)
        dpy = (spec.p(side, x, y + eps) - spec.p(side, x, y - eps)) / (2 * eps)
        lap = dgx[:, 0] + dgy[:, 1]
        res = -nu * lap + np.stack([dpx, dpy]) + al * spec.u(side, x, y) - f
        scale = max(np.abs(f).max(), 1.0)
        pde = max(pde, np.abs(res).max() / scale)
        dux = (spec.u(side, x + eps, y) - spec.u(side, x - eps, y)) / (2 * eps)
        duy = (spec.u(side, x, y + eps) - spec.u(side, x, y - eps)) / (2 * eps)
        gscale = max(np.abs(g).max(), 1.0)
        gres = max(gres, np.abs(np.stack([dux, duy], axis=1) - g).max() / gscale)
        div = max(div, np.abs(g[0, 0] + g[1, 1]).max() / gscale)

    jump = traction = 0.0
    if not spec.curved and spec.levelset is not None:
        x, y = _sample_side(spec, 1, samples, rng).T
        gp = lsm._project_to_interface(spec.levelset, np.column_stack([x, y]), steps=30)
        a, b, c, d = spec.domain
        ok = (gp[:, 0] > a) & (gp[:, 0] < b) & (gp[:, 1] > c) & (gp[:, 1] < d)
        gx, gy = gp[ok].T
        du = spec.u(1, gx, gy) - spec.u(2, gx, gy)
        jump = np.abs(du).max() / max(np.abs(spec.u(1, gx, gy)).max(), 1.0)
        n = spec.levelset.normal(gx, gy)
        tr = spec.g_N(gx, gy, n)
        direct = np.einsum("abq,bq->aq", spec.stress(1, gx, gy) - spec.stress(2, gx, gy), n)
        traction = np.abs(tr - direct).max() / max(np.abs(direct).max(), 1.0)

    bp, bn, bw = _boundary_points(spec, max(samples, 400))
    side = 2 if spec.curved else None
    if side is None and spec.levelset is not None:
        sides = np.where(spec.levelset(bp[:, 0], bp[:, 1]) > 0, 1, 2)
    else:
        sides = np.full(len(bp), side if side else 1)
    flux = 0.0
    scale = 0.0
    for s in np.unique(sides):
        sel = sides == s
        gd = spec.g_D(int(s), bp[sel, 0], bp[sel, 1])
        flux += np.sum(bw[sel] * np.einsum("an,na->n", gd, bn[sel]))
        scale += np.sum(bw[sel] * np.abs(gd).max(axis=0))
    compat = flux / max(scale, 1e-300)

    # pressure mean by Monte Carlo over the physical domain (report only)
    a, b, c, d = spec.domain
    pts = rng.uniform((a, c), (b, d), size=(20 * samples, 2))
    vals = np.zeros(len(pts))
    keep = np.ones(len(pts), bool)
    if spec.levelset is not None:
        lv = spec.levelset(pts[:, 0], pts[:, 1])
        sides = np.where(lv > 0, 1, 2)
        if spec.curved:
            keep = lv < 0
    else:
        sides = np.ones(len(pts), int)
    for s in (1, 2):
        sel = (sides == s) & keep
        if sel.any():
            vals[sel] = spec.p(s, pts[sel, 0], pts[sel, 1])
    pmean = float(vals[keep].mean()) if keep.any() else 0.0
    return SpecReport(spec.name, float(pde), float(gres), float(div), float(jump), float(traction),
                      float(compat), pmean, tol)


def user_problem(name, domain, levelset, nu, alpha, u, grad, p, f, curved=False, center=(0.0, 0.0)):
    """Hook for problems outside the built-in set."""
    return ProblemSpec(name, tuple(domain), levelset, _pair(nu), _pair(alpha), u, grad, p, f,
                       curved=curved, center=tuple(center))


__all__ = ["ProblemSpec", "SpecReport", "PROBLEMS", "builtin", "derive_interface_data",
           "verify_spec", "user_problem", "ex3_lambda"]
