import numpy as np
import pytest

from hdivwg.errors import ConfigurationError
from hdivwg.polybasis import dim_poly, project_cells
from hdivwg.spaces import (
    DiscreteField, HdivSpace, PressureSpace, divergence_at_quadrature, eval_divergence, eval_field,
    interpolate_hdiv,
)

from conftest import cube, hdiv_space, square

CASES = [(2, 3, 1), (2, 3, 2), (2, 2, 3), (2, 2, 4), (3, 1, 1), (3, 2, 2)]


def poly_field(dim, k, seed=0, with_div=False):
    """A random global polynomial vector field of degree k (and its divergence)."""
    rng = np.random.default_rng(seed)
    exps = np.array([e for e in np.ndindex(*(k + 1,) * dim) if sum(e) <= k])
    c = rng.standard_normal((len(exps), dim))

    def f(x):
        mono = np.stack([np.prod(x ** e, axis=-1) for e in exps], axis=-1)
        return mono @ c

    def div(x):
        out = 0.0
        for r in range(dim):
            for e, cr in zip(exps, c[:, r]):
                if e[r] == 0:
                    continue
                de = e.copy()
                de[r] -= 1
                out = out + cr * e[r] * np.prod(x ** de, axis=-1)
        return out

    return (f, div) if with_div else f


@pytest.mark.parametrize("dim,level,k", CASES)
def test_dof_counts(dim, level, k):
    V = hdiv_space(dim, level, k)
    m = V.mesh
    local = dim * dim_poly(dim, k)
    assert V.n_int == local - (dim + 1) * dim_poly(dim - 1, k)
    assert V.n_dofs == m.n_faces * dim_poly(dim - 1, k) + m.n_cells * V.n_int
    assert len(V.dofmap.boundary_dofs) == len(m.boundary_faces) * V.n_fd
    assert np.array_equal(np.sort(np.unique(V.dofmap.cell_dofs)), np.arange(V.n_dofs))


@pytest.mark.parametrize("dim,level,k", CASES)
def test_local_dof_matrix_inverse(dim, level, k):
    V = hdiv_space(dim, level, k)
    eye = np.eye(V.n_modal)
    assert np.abs(np.einsum("tij,tjk->tik", V.D, V.C) - eye).max() < 1e-10


@pytest.mark.parametrize("dim,level,k", CASES)
def test_normal_component_continuous(dim, level, k):
    V = hdiv_space(dim, level, k)
    m = V.mesh
    x = np.random.default_rng(3).standard_normal(V.n_dofs)
    u = DiscreteField(V, x)
    for f in m.interior_faces[:: max(1, len(m.interior_faces) // 15)]:
        pts = V.face_points[f]
        a, b = m.face_cells[f]
        jump = (eval_field(u, a, pts) - eval_field(u, b, pts)) @ m.normals[f]
        assert np.abs(jump).max() < 1e-10 * (1 + np.abs(x).max())


@pytest.mark.parametrize("dim,level,k", CASES)
def test_boundary_dofs_control_normal_trace(dim, level, k):
    V = hdiv_space(dim, level, k)
    m = V.mesh
    x = np.random.default_rng(4).standard_normal(V.n_dofs)
    x[V.dofmap.boundary_dofs] = 0.0
    u = DiscreteField(V, x)
    for f in m.boundary_faces[:: max(1, len(m.boundary_faces) // 10)]:
        vals = eval_field(u, m.face_cells[f, 0], V.face_points[f])
        assert np.abs(vals @ m.normals[f]).max() < 1e-10


@pytest.mark.parametrize("dim,level,k", CASES)
def test_interpolant_reproduces_polynomials(dim, level, k):
    V = hdiv_space(dim, level, k)
    f = poly_field(dim, k, seed=k)
    u = interpolate_hdiv(V, f)
    x = V.mesh.map_points(V.cell_rule.points)
    cells = np.arange(V.mesh.n_cells)
    xi = np.broadcast_to(V.cell_rule.points, x.shape)
    assert np.abs(V.values(u.local(), cells, xi) - f(x)).max() < 1e-9


@pytest.mark.parametrize("dim,level,k", CASES)
def test_interpolant_commutes_with_divergence(dim, level, k):
    # div(Pi_h u) = Q_h div u; degree k+2 keeps every integral exact
    V = hdiv_space(dim, level, k)
    m = V.mesh
    u, div_u = poly_field(dim, k + 2, seed=7, with_div=True)

    uh = interpolate_hdiv(V, u)
    qdiv = project_cells(div_u, m, k - 1, 16)  # (nc, n_pre)
    rule = V.cell_rule
    Q = PressureSpace(m, k)
    cells = np.arange(m.n_cells)
    xi = np.broadcast_to(rule.points, (m.n_cells,) + rule.points.shape)
    expected = Q.values(qdiv, cells, xi)
    assert np.abs(divergence_at_quadrature(uh) - expected).max() < 1e-9


@pytest.mark.parametrize("dim,level,k", CASES)
def test_divergence_is_in_pressure_space(dim, level, k):
    V = hdiv_space(dim, level, k)
    u = DiscreteField(V, np.random.default_rng(5).standard_normal(V.n_dofs))
    div = divergence_at_quadrature(u)
    m = V.mesh
    Q = PressureSpace(m, k)
    cells = np.arange(m.n_cells)
    xi = np.broadcast_to(V.cell_rule.points, (m.n_cells,) + V.cell_rule.points.shape)
    w = V.cell_rule.weights[None] * m.detJ[:, None]
    phi = Q.ref.eval(xi, Q.n_local) / np.sqrt(m.detJ)[:, None, None]
    coef = np.einsum("tq,tq,tqj->tj", w, div, phi)
    assert np.abs(Q.values(coef, cells, xi) - div).max() < 1e-9 * (1 + np.abs(div).max())


def test_pointwise_divergence_consistent():
    V = hdiv_space(2, 2, 2)
    u = DiscreteField(V, np.random.default_rng(6).standard_normal(V.n_dofs))
    pts = V.mesh.map_points(V.cell_rule.points)[1]
    assert np.allclose(eval_divergence(u, 1, pts), divergence_at_quadrature(u)[1])


def test_field_arithmetic():
    V = hdiv_space(2, 2, 1)
    a = DiscreteField(V, np.ones(V.n_dofs))
    b = 2 * a - a
    assert np.allclose(b.coeffs, 1.0)
    with pytest.raises(ValueError):
        DiscreteField(V, np.ones(3))


def test_pressure_space_constraint_is_integral():
    m = square(3)
    Q = PressureSpace(m, 3)
    p = Q.project(lambda x: 1.0 + x[..., 0] * x[..., 1])
    # int (1 + xy) over the unit square = 1.25
    assert Q.constraint_row() @ p.coeffs == pytest.approx(1.25, rel=1e-13)
    assert Q.constant_vector() @ Q.constraint_row() == pytest.approx(1.0)


@pytest.mark.parametrize("cls", [HdivSpace, PressureSpace])
def test_degree_zero_rejected(cls):
    with pytest.raises(ConfigurationError):
        cls(square(1), 0)
