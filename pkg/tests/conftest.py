import functools

import numpy as np
import pytest

from hdivwg.mesh import unit_cube_mesh, unit_square_mesh
from hdivwg.spaces import HdivSpace
from hdivwg.taylor_hood import LagrangeSpace


@functools.lru_cache(maxsize=None)
def square(level):
    return unit_square_mesh(level)


@functools.lru_cache(maxsize=None)
def cube(level):
    return unit_cube_mesh(level)


@functools.lru_cache(maxsize=None)
def hdiv_space(dim, level, k):
    mesh = square(level) if dim == 2 else cube(level)
    return HdivSpace(mesh, k)


@functools.lru_cache(maxsize=None)
def _lagrange(dim, level, k):
    mesh = square(level) if dim == 2 else cube(level)
    return LagrangeSpace(mesh, k, dim)


def random_h10_fields(space, level, rng, count):
    """Random continuous piecewise-P_k vector fields vanishing on the boundary.

    Returns a list of (hdiv field, exact cellwise gradient coefficients in the
    orthonormal P_{k+1} basis, shape (nc, d, d, n_ten)).
    """
    mesh, d, k = space.mesh, space.dim, space.k
    L = _lagrange(d, level, k)
    rule = space.cell_rule
    cells = np.arange(mesh.n_cells)
    xi = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    dpsi = L.shape_gradients(xi, cells)  # (nc, nq, nloc, d)
    w = rule.weights[None, :] * mesh.detJ[:, None]
    phi = space.cell_phi / np.sqrt(mesh.detJ)[:, None, None]  # (nc, nq, n_ten)
    sq = np.sqrt(mesh.detJ)[:, None, None]
    out = []
    for _ in range(count):
        u = rng.standard_normal(L.n_dofs)
        u[L.dofmap.boundary_dofs] = 0.0
        a = L.modal(u)  # (nc, d, nloc)
        modal = sq * np.einsum("ja,tca->tcj", L.coef, a)
        field = space.field_from_modal(modal)
        grad = np.einsum("tqar,tca->tqcr", dpsi, a)
        coeff = np.einsum("tq,tqrc,tqi->trci", w, grad, phi)
        out.append((field, coeff))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record_verdict(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
