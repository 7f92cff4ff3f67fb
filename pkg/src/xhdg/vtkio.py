"""Legacy ASCII VTK output of per-piece fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .solver import Solution
from .space import cell_basis


def write_vtk(solution: Solution, path, title: str = "xhdg solution") -> Path:
    """Write every element piece as a polygon with cell data.

    Cell data: side, pressure, velocity at the piece centroid and the
    gradient tensor ``L`` (as four scalars).
    """
    cut = solution.cut
    path = Path(path)
    polys = cut.piece_polygons
    pts = np.vstack(polys) if polys else np.zeros((0, 2))
    sizes = np.array([len(p) for p in polys], dtype=int)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    cent = np.array([p.mean(axis=0) for p in polys]) if polys else np.zeros((0, 2))
    phi = cell_basis(cent[:, 0], cent[:, 1], cut.piece_center, cut.piece_h)  # (3, P)
    uc = np.einsum("paj,jp->pa", solution.u, phi)

    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET POLYDATA",
             f"POINTS {len(pts)} double"]
    lines += [f"{x:.16g} {y:.16g} 0" for x, y in pts]
    lines.append(f"POLYGONS {len(polys)} {int(sizes.sum() + len(polys))}")
    for k, s in enumerate(sizes):
        lines.append(" ".join(map(str, [s, *range(offsets[k], offsets[k + 1])])))
    P = len(polys)
    lines += [f"CELL_DATA {P}", "SCALARS side int 1", "LOOKUP_TABLE default"]
    lines += [str(int(s)) for s in cut.piece_side]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16g}" for v in solution.p]
    lines.append("VECTORS velocity double")
    lines += [f"{a:.16g} {b:.16g} 0" for a, b in uc]
    for a in range(2):
        for b in range(2):
            lines += [f"SCALARS L{a + 1}{b + 1} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.16g}" for v in solution.L[:, a, b]]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_cell_scalar(path, name: str) -> np.ndarray:
    """Read one SCALARS block back (used to round-trip test the writer)."""
    text = Path(path).read_text().splitlines()
    for i, line in enumerate(text):
        if line.startswith(f"SCALARS {name} "):
            n = int(next(t for t in text if t.startswith("CELL_DATA")).split()[1])
            return np.array([float(v) for v in text[i + 2:i + 2 + n]])
    raise KeyError(name)
