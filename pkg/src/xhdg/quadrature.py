"""Quadrature on triangles, segments and polygonal cut pieces.

Triangle rules are collapsed (Duffy) tensor Gauss rules: every weight is
positive and any degree is reachable, which is all the composite rules need.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 10


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n, 2) or (n,) for reference segments
    weights: np.ndarray  # (n,)

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def _check_degree(degree: int) -> int:
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree must be in [0, {MAX_DEGREE}], got {degree}")
    return degree


@lru_cache(maxsize=None)
def gauss_legendre(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    degree = _check_degree(degree)
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w)


@lru_cache(maxsize=None)
def reference_triangle(degree: int) -> QuadRule:
    """Rule on the triangle (0,0), (1,0), (0,1) exact to ``degree``.

    Collapsed coordinates: x = s, y = t (1 - s) with the Jacobian (1 - s)
    absorbed into a Gauss-Jacobi(1, 0) rule in s.
    """
    degree = _check_degree(degree)
    n = degree // 2 + 1
    t, wt = np.polynomial.legendre.leggauss(n)
    t, wt = 0.5 * (t + 1.0), 0.5 * wt
    s, ws = _gauss_jacobi_10(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    return QuadRule(pts, W.ravel())


def _gauss_jacobi_10(n: int):
    """n-point Gauss rule on [0, 1] for the weight (1 - s)."""
    x, w = roots_jacobi(n, 1.0, 0.0)
    # (1 - x) = 2 (1 - s), dx = 2 ds
    return 0.5 * (x + 1.0), w / 4.0


def map_triangles(tris: np.ndarray, degree: int):
    """Map the reference rule onto a stack of triangles.

    Returns points (T, q, 2) and weights (T, q).  Orientation does not matter;
    weights use the absolute Jacobian.
    """
    rule = reference_triangle(degree)
    tris = np.asarray(tris, dtype=float)
    a = tris[:, 0]
    e1 = tris[:, 1] - a
    e2 = tris[:, 2] - a
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    s, t = rule.points[:, 0], rule.points[:, 1]
    pts = a[:, None, :] + s[None, :, None] * e1[:, None, :] + t[None, :, None] * e2[:, None, :]
    return pts, det[:, None] * rule.weights[None, :]


def map_segments(p0: np.ndarray, p1: np.ndarray, degree: int):
    """Gauss-Legendre points (S, q, 2), weights (S, q) and reference
    abscissae (q,) on a stack of segments."""
    rule = gauss_legendre(degree)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    pts = p0[:, None, :] + rule.points[None, :, None] * d[:, None, :]
    return pts, length[:, None] * rule.weights[None, :], rule.points


def fan_triangulate(polygon: np.ndarray) -> np.ndarray:
    """Fan triangulation of a convex polygon from its first vertex."""
    polygon = np.asarray(polygon, dtype=float)
    k = len(polygon)
    if k < 3:
        raise ValueError("polygon needs at least three vertices")
    return np.stack([np.repeat(polygon[:1], k - 2, axis=0), polygon[1:-1], polygon[2:]], axis=1)


def polygon_rule(polygon: np.ndarray, degree: int) -> QuadRule:
    pts, w = map_triangles(fan_triangulate(polygon), degree)
    return QuadRule(pts.reshape(-1, 2), w.ravel())


def segment_rule(p0, p1, degree: int) -> QuadRule:
    pts, w, _ = map_segments(np.atleast_2d(p0), np.atleast_2d(p1), degree)
    return QuadRule(pts[0], w[0])
