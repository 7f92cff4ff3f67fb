import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xhdg.mesh import MeshError, build_structured, from_arrays, validate_shape_regularity


def test_unit_square_two_by_two_counts():
    m = build_structured((0, 1, 0, 1), 2, "triangle")
    assert m.num_cells == 8
    assert len(m.vertices) == 9
    assert m.num_faces == 16
    assert m.boundary_faces.sum() == 8


def test_diameters_on_sixteen_grid():
    m = build_structured((-1, 1, -1, 1), 16, "tri")
    assert m.num_cells == 512
    np.testing.assert_allclose(m.cell_diameter, np.sqrt(2) * 2 / 16, rtol=1e-14)
    assert m.h == pytest.approx(np.sqrt(2) / 8)


@given(n=st.integers(1, 12), kind=st.sampled_from(["tri", "rect"]))
@settings(max_examples=25, deadline=None)
def test_euler_characteristic(n, kind):
    m = build_structured((0, 2, -1, 0.5), n, kind)
    assert len(m.vertices) - m.num_faces + m.num_cells == 1
    assert np.isclose(m.cell_area.sum(), 3.0)
    interior = m.face_cells[:, 1] >= 0
    # every interior face is shared by two distinct cells
    assert np.all(m.face_cells[interior, 0] != m.face_cells[interior, 1])
    assert (~interior).sum() == 4 * n


def test_face_normals_are_unit_and_outward_on_boundary():
    m = build_structured((0, 1, 0, 1), 3, "rect")
    nrm = m.face_normals
    np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0)
    b = m.boundary_faces
    mid = m.vertices[m.faces[b]].mean(axis=1)
    owner_c = m.cell_centroid[m.face_cells[b, 0]]
    assert np.all(np.sum((mid - owner_c) * nrm[b], axis=1) > 0)


def test_shape_constants_square_cells():
    rep = validate_shape_regularity(build_structured((0, 1, 0, 1), 4, "rect"))
    # inscribed radius s/2 over diameter s*sqrt(2)
    assert rep.theta_star == pytest.approx(1 / (2 * np.sqrt(2)))
    assert rep.l_star == pytest.approx(1 / np.sqrt(2))
    assert rep.ok


def test_shape_constants_right_triangles():
    rep = validate_shape_regularity(build_structured((0, 1, 0, 1), 4, "tri"))
    assert rep.l_star == pytest.approx(1 / np.sqrt(2))
    # incircle of a right isosceles triangle with legs s: r = s (2 - sqrt 2) / 2
    assert rep.theta_star == pytest.approx((2 - np.sqrt(2)) / 2 / np.sqrt(2))


@pytest.mark.parametrize("args", [((0, 0, 0, 1), 2, "tri"), ((0, 1, 0, 1), 0, "tri"), ((0, 1, 0, 1), 2, "hex")])
def test_bad_input_rejected(args):
    with pytest.raises(MeshError):
        build_structured(*args)


def test_from_arrays_single_triangle():
    m = from_arrays(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]))
    assert m.num_faces == 3
    assert m.cell_area[0] == pytest.approx(0.5)
    assert m.boundary_faces.sum() == 3
