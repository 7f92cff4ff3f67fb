import numpy as np
import pytest

from xhdg.assembly import ProblemData
from xhdg.levelset import circle, cut_mesh
from xhdg.mesh import build_structured

BOX = (-1.0, 1.0, -1.0, 1.0)
# resolves on 8x8 triangles and rectangles and avoids mesh vertices
SMALL_CIRCLE = ((0.03, -0.02), 0.61)

_ACCEPTANCE_LINES: list[str] = []


def record(line: str) -> None:
    """Queue one acceptance line for the terminal summary."""
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def patch_data(nu=(1.0, 1e-3)):
    """u = (x, -y), p = 0 with the traction jump that makes it an exact solution."""
    nu = tuple(nu)

    def g_D(s, x, y):
        return np.stack([x, -y])

    def g_N(x, y, n):
        return (nu[0] - nu[1]) * np.stack([n[0], -n[1]])

    return ProblemData(nu, (0.0, 0.0), None, g_D, g_N)


def patch_exact(cut, nu):
    """Exact (L, u) of the patch problem in the piece bases."""
    L = np.array([[1.0, 0.0], [0.0, -1.0]]) * np.asarray(nu)[cut.piece_side - 1][:, None, None]
    c, h = cut.piece_center, cut.piece_h
    u = np.zeros((cut.num_pieces, 2, 3))
    u[:, 0, 0] = c[:, 0]
    u[:, 0, 1] = h
    u[:, 1, 0] = -c[:, 1]
    u[:, 1, 2] = -h
    return L, u


@pytest.fixture(params=["tri", "rect"])
def mesh_type(request):
    return request.param


@pytest.fixture
def cut8(mesh_type):
    return cut_mesh(build_structured(BOX, 8, mesh_type), circle(*SMALL_CIRCLE))
