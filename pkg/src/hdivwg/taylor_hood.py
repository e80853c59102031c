"""Continuous P_k / P_{k-1} (Taylor-Hood) reference discretization.

Standard Galerkin form with the classical gradient:

    (mu grad u_h, grad v) - (div v, p_h) = (f, v),   (div u_h, q) = 0,

velocity boundary values by nodal interpolation of g and a mean-zero
pressure multiplier.  Works in 2D and 3D for any degree >= 2, though only
k = 2, 3 in 2D are exercised by the experiments.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.sparse as sp

from .assembly import SaddleSystem
from .errors import ConfigurationError
from .polybasis import dim_poly, ref_basis
from .quadrature import simplex_rule
from .spaces import DofMap, DiscreteField

TH_DEGREES = (2, 3)


@lru_cache(maxsize=None)
def lattice(dim, degree):
    """Barycentric multi-indices (alpha_0..alpha_d) with |alpha| = degree."""
    rows = [a for a in product(range(degree + 1), repeat=dim) if sum(a) <= degree]
    alpha = np.array([(degree - sum(a),) + a for a in rows], dtype=np.int64)
    return alpha


@lru_cache(maxsize=None)
def nodal_coefficients(dim, degree):
    """Coefficients expressing the nodal basis in the orthonormal reference basis."""
    alpha = lattice(dim, degree)
    xi = alpha[:, 1:] / degree
    V = ref_basis(dim, degree).eval(xi, dim_poly(dim, degree))
    return np.linalg.inv(V)  # column a is node a's basis function


@dataclass
class LagrangeDofMap:
    node_coords: np.ndarray  # (n_nodes, d)
    cell_nodes: np.ndarray  # (nc, nloc)
    boundary_nodes: np.ndarray
    n_comp: int

    @property
    def n_nodes(self):
        return len(self.node_coords)


def build_lagrange_dofmap(mesh, degree, n_comp=1, decimals=10):
    """Shared nodes are merged by (rounded) physical coordinates."""
    alpha = lattice(mesh.dim, degree)
    xi = alpha[:, 1:] / degree
    x = mesh.map_points(xi)  # (nc, nloc, d)
    nc, nloc, d = x.shape
    key = np.round(x.reshape(-1, d), decimals) + 0.0
    coords, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # number nodes by first appearance for a cell-local ordering
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    cell_nodes = rank[inverse.ravel()].reshape(nc, nloc)
    coords = x.reshape(-1, d)[first[order]]
    # node a lies on local face i iff its barycentric alpha_i vanishes
    on_face = alpha.T == 0  # (d+1, nloc)
    bface = mesh.face_cells[mesh.cell_faces, 1] < 0  # (nc, d+1)
    mask = np.einsum("ti,ia->ta", bface.astype(int), on_face.astype(int)) > 0
    boundary = np.unique(cell_nodes[mask])
    return LagrangeDofMap(coords, cell_nodes, boundary, n_comp)


class LagrangeSpace:
    """Continuous P_degree with n_comp components; dof = comp * n_nodes + node."""

    family = "lagrange"

    def __init__(self, mesh, degree, n_comp=1, quad_degree=None):
        if degree < 1:
            raise ConfigurationError(f"Lagrange degree must be >= 1, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.k = degree
        self.dim = mesh.dim
        self.n_comp = n_comp
        self.quad_degree = quad_degree if quad_degree is not None else 2 * degree + 6
        self.cell_rule = simplex_rule(mesh.dim, self.quad_degree)
        self.nodes = build_lagrange_dofmap(mesh, degree, n_comp)
        self.ref = ref_basis(mesh.dim, degree)
        self.coef = nodal_coefficients(mesh.dim, degree)
        self.n_local = self.coef.shape[1]
        nn = self.nodes.n_nodes
        cn = self.nodes.cell_nodes
        cell_dofs = (np.arange(n_comp)[None, :, None] * nn + cn[:, None, :]).reshape(len(cn), -1)
        bnd = (np.arange(n_comp)[:, None] * nn + self.nodes.boundary_nodes[None, :]).ravel()
        self.dofmap = DofMap("lagrange", degree, cell_dofs, n_comp * nn, bnd, None, None)

    @property
    def n_dofs(self):
        return self.dofmap.n_dofs

    def shape_values(self, xi):
        return self.ref.eval(xi, self.coef.shape[0]) @ self.coef

    def shape_gradients(self, xi, cells):
        """Physical gradients (..., nloc, d) of the nodal basis."""
        g = np.einsum("...jh,ja->...ah", self.ref.grad(xi, self.coef.shape[0]), self.coef)
        return np.einsum("t...ah,thr->t...ar", g, self.mesh.jinv[cells])

    def modal(self, x, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else cells
        a = x[self.dofmap.cell_dofs[cells]].reshape(len(cells), self.n_comp, self.n_local)
        return a if self.n_comp > 1 else a[:, 0]

    def _vec(self, a):
        return a if a.ndim == 3 else a[:, None, :]

    def values(self, a, cells, xi):
        v = np.einsum("tqa,tca->tqc", self.shape_values(xi), self._vec(a))
        return v if self.n_comp > 1 else v[..., 0]

    def gradients(self, a, cells, xi):
        g = np.einsum("tqar,tca->tqcr", self.shape_gradients(xi, cells), self._vec(a))
        return g if self.n_comp > 1 else g[..., 0, :]

    def interpolate(self, func):
        vals = np.asarray(func(self.nodes.node_coords), dtype=float)
        vals = vals.reshape(self.nodes.n_nodes, self.n_comp)
        return DiscreteField(self, vals.T.ravel())

    def constant_vector(self):
        return np.ones(self.n_dofs)

    def zero(self):
        return DiscreteField(self, np.zeros(self.n_dofs))


def _scatter(rows, cols, vals, shape):
    r = np.broadcast_to(rows[:, :, None], vals.shape)
    c = np.broadcast_to(cols[:, None, :], vals.shape)
    return sp.coo_matrix((vals.ravel(), (r.ravel(), c.ravel())), shape=shape).tocsr()


def assemble_taylor_hood(mesh, k, mu=1.0, f=None, g=None, quad_degree=None):
    """Saddle system for the P_k/P_{k-1} pair; same layout as the H(div) system."""
    if k < 2:
        raise ConfigurationError(f"Taylor-Hood needs k >= 2, got {k}")
    if mu <= 0:
        raise ConfigurationError(f"viscosity must be positive, got {mu}")
    d = mesh.dim
    V = LagrangeSpace(mesh, k, d, quad_degree)
    Q = LagrangeSpace(mesh, k - 1, 1, V.quad_degree)
    rule = V.cell_rule
    cells = np.arange(mesh.n_cells)
    xi = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    w = rule.weights[None, :] * mesh.detJ[:, None]

    dpsi = V.shape_gradients(xi, cells)  # (nc, nq, nv, d)
    psi = V.shape_values(rule.points)  # (nq, nv)
    q = Q.shape_values(rule.points)  # (nq, np)
    nv = V.n_local

    stiff = mu * np.einsum("tq,tqar,tqbr->tab", w, dpsi, dpsi)
    local_a = np.einsum("rs,tab->trasb", np.eye(d), stiff).reshape(mesh.n_cells, d * nv, d * nv)
    A = _scatter(V.dofmap.cell_dofs, V.dofmap.cell_dofs, local_a, (V.n_dofs, V.n_dofs))

    local_b = np.einsum("tq,qm,tqar->tmra", w, q, dpsi).reshape(mesh.n_cells, Q.n_local, d * nv)
    B = _scatter(Q.dofmap.cell_dofs, V.dofmap.cell_dofs, local_b, (Q.n_dofs, V.n_dofs))

    c = np.zeros(Q.n_dofs)
    np.add.at(c, Q.dofmap.cell_dofs, np.einsum("tq,qm->tm", w, q))

    rhs_u = np.zeros(V.n_dofs)
    if f is not None:
        x = mesh.map_points(rule.points)
        fv = np.asarray(f(x), dtype=float)
        np.add.at(rhs_u, V.dofmap.cell_dofs, np.einsum("tq,qa,tqr->tra", w, psi, fv).reshape(mesh.n_cells, -1))

    bnd = V.dofmap.boundary_dofs
    values = None
    if g is not None:
        values = V.interpolate(g).coeffs[bnd]
    return SaddleSystem(V, Q, A, B, c, rhs_u, np.zeros(Q.n_dofs), mu, bnd,
                        boundary_values=values, g=g, info={"family": "taylor-hood"})


def solve_taylor_hood(mesh, k, mu=1.0, f=None, g=None, quad_degree=None, method="direct"):
    """Returns (u_h, p_h, report)."""
    from .solver import solve_saddle

    system = assemble_taylor_hood(mesh, k, mu, f, g, quad_degree)
    return solve_saddle(system, method=method)
