import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xhdg.levelset import (AssumptionViolation, CellClass, build_cut_topology, by_name, circle, classify_element,
                           cut_mesh, five_star, halfplane, intersect_edge, polygon_area,
                           validate_interface_assumptions)
from xhdg.mesh import build_structured, from_arrays

UNIT_TRI = from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
UNIT_SQ = from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), np.array([[0, 1, 2, 3]]))


def test_circle_root_on_edge():
    ls = circle((0, 0), np.sqrt(0.3))
    p = intersect_edge(ls, [0.0, 0.4], [1.0, 0.4])
    assert p == pytest.approx([np.sqrt(0.14), 0.4], abs=1e-12)


def test_line_root_on_edge():
    p = intersect_edge(halfplane(0, 1, -0.4031), [0.4, 0.40], [0.4, 0.41])
    assert p == pytest.approx([0.4, 0.4031], abs=1e-13)


def test_vertex_below_snap_tolerance_goes_to_side_one():
    # phi(0, 0) = 1e-15, positive elsewhere
    assert classify_element(UNIT_TRI, halfplane(1, 0, 1e-15), 0) == CellClass.PURE1


def test_classification_pure_and_cut():
    assert classify_element(UNIT_TRI, halfplane(1, 0, 2), 0) == CellClass.PURE1
    assert classify_element(UNIT_TRI, halfplane(1, 0, -2), 0) == CellClass.PURE2
    assert classify_element(UNIT_TRI, halfplane(1, 0, -0.5), 0) == CellClass.CUT


def test_triangle_cut_by_vertical_line():
    topo = build_cut_topology(UNIT_TRI, halfplane(1, 0, -0.5), 0)
    # side 1 is phi > 0, the triangle (0.5,0),(1,0),(0.5,0.5)
    assert topo.area(1) == pytest.approx(0.125, abs=1e-15)
    assert topo.area(2) == pytest.approx(0.375, abs=1e-15)
    assert topo.chord_length == pytest.approx(0.5)
    assert sorted(map(tuple, np.round(topo.chord, 14))) == [(0.5, 0.0), (0.5, 0.5)]
    # normal points from side 1 into side 2, i.e. towards -x
    assert topo.normal == pytest.approx([-1.0, 0.0])


def test_square_cut_horizontally():
    topo = build_cut_topology(UNIT_SQ, halfplane(0, 1, -0.25), 0)
    assert topo.area(1) == pytest.approx(0.75)
    assert topo.area(2) == pytest.approx(0.25)
    assert topo.chord_length == pytest.approx(1.0)


def test_square_corner_triangle():
    topo = build_cut_topology(UNIT_SQ, halfplane(1, 1, -0.5), 0)
    assert topo.area(2) == pytest.approx(0.125)
    assert len(topo.polygons[2]) == 3


@given(a=st.floats(-1, 1), b=st.floats(-1, 1), c=st.floats(-1, 1))
@settings(max_examples=80, deadline=None)
def test_piece_areas_add_up_for_random_lines(a, b, c):
    if np.hypot(a, b) < 1e-3:
        return
    ls = halfplane(a, b, c)
    vals = ls(UNIT_SQ.vertices[:, 0], UNIT_SQ.vertices[:, 1])
    if np.min(np.abs(vals)) < 1e-6 * np.hypot(a, b):
        return  # snapping regime covered elsewhere
    if classify_element(UNIT_SQ, ls, 0) != CellClass.CUT:
        return
    topo = build_cut_topology(UNIT_SQ, ls, 0)
    assert topo.area(1) + topo.area(2) == pytest.approx(1.0, abs=1e-13)
    for side, poly in topo.polygons.items():
        assert polygon_area(poly) > 0  # counter-clockwise
        sgn = 1 if side == 1 else -1
        assert np.all(sgn * ls(poly[:, 0], poly[:, 1]) >= -1e-12)


@pytest.mark.parametrize("kind", ["tri", "rect"])
def test_cut_mesh_area_additivity(kind):
    mesh = build_structured((-1, 1, -1, 1), 32, kind)
    cut = cut_mesh(mesh, circle((0, 0), np.sqrt(0.3)))
    per_cell = np.bincount(cut.piece_cell, weights=cut.piece_area, minlength=mesh.num_cells)
    assert np.max(np.abs(per_cell - mesh.cell_area)) <= 1e-12
    assert len(cut.cut_cells) > 0
    # every interface segment separates a side-1 and a side-2 piece
    assert np.all(cut.if_length > 0)


def test_interface_normals_point_into_side_two():
    cut = cut_mesh(build_structured((-1, 1, -1, 1), 16, "tri"), circle((0, 0), np.sqrt(0.3)))
    mid = 0.5 * (cut.if_p0 + cut.if_p1)
    # side 2 is inside the circle, so the normal points towards the centre
    assert np.all(np.sum(mid * cut.if_normal, axis=1) < 0)


def test_validator_accepts_circle_on_sixteen_grid():
    rep = validate_interface_assumptions(build_structured((-1, 1, -1, 1), 16, "tri"), circle((0, 0), np.sqrt(0.3)))
    assert rep.a1_ok
    assert rep.num_cut_cells > 0
    assert 0 < rep.min_cut_fraction <= 0.5
    assert rep.gamma > 0


def test_validator_straight_line_gamma_zero():
    rep = validate_interface_assumptions(build_structured((0, 1, 0, 1), 8, "tri"), halfplane(0, 1, -0.4031))
    assert rep.a1_ok
    assert rep.gamma == pytest.approx(0.0, abs=1e-12)


def test_five_star_coarse_mesh_reports_violation():
    mesh = build_structured((-1, 1, -1, 1), 16, "tri")
    rep = validate_interface_assumptions(mesh, five_star())
    assert not rep.a1_ok and rep.a1_violations
    centres = mesh.cell_centroid[rep.a1_violations]
    # offending cells straddle the star outline
    assert np.all(np.abs(five_star()(centres[:, 0], centres[:, 1])) < mesh.h)
    with pytest.raises(AssumptionViolation) as exc:
        cut_mesh(mesh, five_star(), curved=True)
    assert "refine" in str(exc.value)
    assert exc.value.cells


def test_five_star_resolved_on_finer_mesh():
    assert validate_interface_assumptions(build_structured((-1, 1, -1, 1), 32, "tri"), five_star()).a1_ok


def test_curved_mode_keeps_only_side_two():
    cut = cut_mesh(build_structured((0, 1, 0, 1), 16, "tri"), circle((0.5, 0.5), np.sqrt(3) / 4), curved=True)
    assert np.all(cut.piece_side == 2)
    assert np.all(cut.if_essential)
    assert cut.piece_area.sum() == pytest.approx(np.pi * 3 / 16, rel=2e-2)


def test_translated_and_named_level_sets():
    ls = circle((0, 0), 1.0).translated(0.5, 0.0)
    assert ls(0.5, 0.0) == pytest.approx(-1.0)
    assert by_name("circle", center=(0, 0), radius=1.0)(1.0, 0.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        by_name("heart")
    fs = five_star()
    # petal tip along the +x axis at r0 + amplitude, valley at r0 - amplitude
    assert fs(np.sqrt(3) / 4 + 0.1, 0.0) == pytest.approx(0.0, abs=1e-14)
    t = np.pi / 5
    r = np.sqrt(3) / 4 - 0.1
    assert fs(r * np.cos(t), r * np.sin(t)) == pytest.approx(0.0, abs=1e-14)
