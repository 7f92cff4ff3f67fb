"""Single solves and refinement studies of the built-in problems."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .levelset import cut_mesh
from .mesh import build_structured
from .postprocess import ErrorRow, compute_errors, convergence_orders, energy_seminorm
from .problems import ProblemSpec
from .solver import Solution, piece_flux, solve_problem
from .space import build_dofmap

log = logging.getLogger(__name__)


@dataclass
class LevelResult:
    row: ErrorRow
    solution: Solution


def run_level(spec: ProblemSpec, n: int, mesh_type: str = "tri", m: int = 0, snap: float = 1e-10,
              degree: int = 4, error_degree: int = 8, shift=(0.0, 0.0)) -> LevelResult:
    """Solve ``spec`` on an ``n x n`` mesh and measure the errors.

    ``shift`` translates the level set by a multiple of the mesh size, which
    is how small cut fractions are provoked.
    """
    t0 = time.perf_counter()
    mesh = build_structured(spec.domain, n, mesh_type)
    ls = spec.levelset
    if ls is not None and any(shift):
        ls = ls.translated(shift[0] * mesh.h, shift[1] * mesh.h)
        spec = _with_levelset(spec, ls)
    cut = cut_mesh(mesh, ls, curved=spec.curved, snap=snap)
    dofmap = build_dofmap(cut, m)
    sol = solve_problem(cut, dofmap, spec.data(), degree=degree)
    seconds = time.perf_counter() - t0
    row = compute_errors(sol, spec, error_degree)
    row.energy = energy_seminorm(sol, spec, error_degree)
    row.dofs = int((~dofmap.essential).sum())
    row.seconds = seconds
    flux = piece_flux(sol)
    row.max_piece_flux = float(np.abs(flux).max()) if len(flux) else 0.0
    log.info("%s %s n=%d: err_u=%.4e err_L=%.4e err_p=%.4e (%.2fs)", spec.name, mesh_type, n,
             row.err_u, row.err_L, row.err_p, seconds)
    return LevelResult(row, sol)


def _with_levelset(spec: ProblemSpec, ls) -> ProblemSpec:
    from dataclasses import replace

    return replace(spec, levelset=ls)


def run_convergence(spec: ProblemSpec, levels, mesh_type: str = "tri", m: int = 0, **kw):
    """Rows for every level plus the orders note."""
    rows = [run_level(spec, n, mesh_type, m, **kw).row for n in levels]
    return convergence_orders(rows)
