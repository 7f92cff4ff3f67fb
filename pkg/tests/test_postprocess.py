import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BOX, SMALL_CIRCLE, patch_data
from xhdg.levelset import circle, cut_mesh
from xhdg.mesh import build_structured
from xhdg.postprocess import (CSV_COLUMNS, ErrorRow, compute_errors, convergence_orders, energy_seminorm, is_halving,
                              order, plot_convergence, read_csv, to_csv, to_markdown)
from xhdg.problems import builtin, user_problem
from xhdg.solver import solve_problem
from xhdg.space import build_dofmap
from xhdg.study import run_level


def _row(n, e):
    return ErrorRow(n, e, 2 * e, 3 * e, 4 * e, energy=e, dofs=10 * n, seconds=0.5)


def test_order_from_reference_values():
    assert order(1.4633e-1, 3.7945e-2) == pytest.approx(1.95, abs=5e-3)


@given(levels=st.lists(st.integers(1, 512), min_size=2, max_size=5, unique=True))
def test_halving_detection(levels):
    levels = sorted(levels)
    expect = all(b == 2 * a for a, b in zip(levels, levels[1:]))
    assert is_halving(levels) == expect


def test_orders_filled_only_for_halving_levels():
    rows, note = convergence_orders([_row(8, 1.0), _row(16, 0.25), _row(32, 0.0625)])
    assert note == ""
    assert rows[0].orders == {}
    assert rows[2].orders["u"] == pytest.approx(2.0)
    rows, note = convergence_orders([_row(8, 1.0), _row(12, 0.5)])
    assert "omitted" in note
    assert all(r.orders == {} for r in rows)


def test_csv_layout_and_round_trip():
    rows, _ = convergence_orders([_row(16, 0.1), _row(32, 0.05)])
    text = to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(text)
    assert [int(r["n"]) for r in back] == [16, 32]
    assert back[0]["ord_u"] == ""
    assert float(back[1]["ord_u"]) == pytest.approx(1.0)
    assert float(back[1]["err_p"]) == pytest.approx(0.2)
    assert int(back[1]["dofs"]) == 320


def test_markdown_table():
    rows, _ = convergence_orders([_row(16, 0.1), _row(32, 0.05)])
    md = to_markdown(rows, "demo", "a note")
    assert "### demo" in md
    assert "| 32×32 | 5.0000E-02 | 1.00 |" in md
    assert md.count("\n|") >= 3
    assert "_a note_" in md


def test_plot_writes_png(tmp_path):
    rows, _ = convergence_orders([_row(16, 0.1), _row(32, 0.05), _row(64, 0.02)])
    path = tmp_path / "conv.png"
    plot_convergence(rows, path, "demo")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def _patch_spec(nu):
    def u(s, x, y):
        return np.stack([x, -y])

    def grad(s, x, y):
        z = np.zeros_like(x)
        return np.array([[z + 1, z], [z, z - 1]])

    return user_problem("patch", BOX, circle(*SMALL_CIRCLE), nu, 0.0, u, grad,
                        lambda s, x, y: np.zeros_like(x), lambda s, x, y: np.zeros((2,) + np.shape(x)))


def test_errors_vanish_for_patch(cut8):
    nu = (1.0, 1e-3)
    sol = solve_problem(cut8, build_dofmap(cut8), patch_data(nu))
    row = compute_errors(sol, _patch_spec(nu))
    for k in ("u", "L", "gradu", "p"):
        assert row.error(k) <= 1e-9
    assert row.consistency <= 1e-9
    assert energy_seminorm(sol, _patch_spec(nu)) <= 1e-9


def test_absolute_pressure_error_when_exact_pressure_vanishes(cut8):
    nu = (1.0, 1.0)
    sol = solve_problem(cut8, build_dofmap(cut8), patch_data(nu))
    k = int(np.argmax(cut8.piece_area))
    sol.p[k] += 1e-3
    err = compute_errors(sol, _patch_spec(nu)).err_p
    # one bumped piece, measured after removing the mean over the domain
    a, total = cut8.piece_area[k], cut8.piece_area.sum()
    assert err == pytest.approx(1e-3 * np.sqrt(a * (1 - a / total)), rel=1e-6)


def test_energy_seminorm_decays_at_first_order():
    spec = builtin("ex1", (1.0, 1e-3))
    e = [run_level(spec, n, "tri").row.energy for n in (16, 32, 64)]
    assert math.log2(e[1] / e[2]) == pytest.approx(1.0, abs=0.15)


def test_error_terms_are_nonnegative():
    spec = builtin("ex1")
    res = run_level(spec, 16, "rect")
    terms = energy_seminorm(res.solution, spec, terms=True)
    assert terms.shape == (4,)
    assert np.all(terms >= 0)
    assert res.row.energy == pytest.approx(np.sqrt(terms.sum()))
