import numpy as np

from xhdg.problems import builtin
from xhdg.study import run_level
from xhdg.vtkio import read_vtk_cell_scalar, write_vtk


def test_round_trip(tmp_path):
    res = run_level(builtin("ex1"), 16, "tri")
    sol = res.solution
    path = write_vtk(sol, tmp_path / "ex1.vtk")
    np.testing.assert_allclose(read_vtk_cell_scalar(path, "pressure"), sol.p, rtol=1e-15)
    np.testing.assert_array_equal(read_vtk_cell_scalar(path, "side"), sol.cut.piece_side)
    np.testing.assert_allclose(read_vtk_cell_scalar(path, "L12"), sol.L[:, 0, 1], rtol=1e-15)
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"POLYGONS {sol.cut.num_pieces} " in text
