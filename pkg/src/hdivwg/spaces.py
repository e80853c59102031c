"""Degree-of-freedom layouts for the H(div) velocity and the DG pressure.

Velocity functions are stored cell-wise in the orthonormal vector basis
``psi_j e_r`` of ``[P_k(T)]^d`` (modal index ``r * n + j``).  The global
unknowns are

* per face: moments ``int_e (v . n_e) chi_a`` against an orthonormal basis
  ``chi`` of ``P_k(e)``, with ``n_e`` the face's global normal, so the two
  adjacent cells share them and the normal trace is continuous;
* per cell: coordinates of the modal vector in an orthonormal basis of the
  null space of the face-moment matrix.

The local dof matrix ``D_T = [M_T; N_T^T]`` is square and invertible and
``C_T = D_T^{-1}`` maps local dofs to modal coefficients.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigurationError, NumericalError
from .polybasis import dim_poly, ref_basis
from .quadrature import REFERENCE_MEASURE, simplex_rule

COND_LIMIT = 1e12


@dataclass(frozen=True)
class DofMap:
    kind: str
    degree: int
    cell_dofs: np.ndarray  # (nc, n_local)
    n_dofs: int
    boundary_dofs: np.ndarray
    face_dofs: np.ndarray = None  # (nf, n_face) for face-based layouts
    interior_dofs: np.ndarray = None  # (nc, n_interior)


class DiscreteField:
    """Coefficient vector attached to a space."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dofmap.n_dofs,):
            raise ValueError(f"expected {space.dofmap.n_dofs} coefficients, got {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    def __call__(self, cell, points):
        return eval_field(self, cell, points)

    def __add__(self, other):
        return DiscreteField(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DiscreteField(self.space, self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return DiscreteField(self.space, alpha * self.coeffs)

    __rmul__ = __mul__

    def local(self):
        return self.space.modal(self.coeffs)


def _face_quadrature(mesh, rule):
    fv = mesh.vertices[mesh.faces]
    edges = fv[:, 1:] - fv[:, :1]
    points = fv[:, None, 0, :] + np.einsum("qj,fjd->fqd", rule.points, edges)
    scale = mesh.face_measures / REFERENCE_MEASURE[mesh.dim - 1]
    return points, rule.weights[None, :] * scale[:, None], scale


class HdivSpace:
    """V_h: H(div)-conforming [P_k]^d with v.n = 0 on the boundary dofs."""

    family = "hdiv"

    def __init__(self, mesh, k, quad_degree=None):
        if k < 1:
            raise ConfigurationError(f"velocity degree must be >= 1, got {k}")
        d = mesh.dim
        self.mesh = mesh
        self.k = k
        self.dim = d
        self.quad_degree = quad_degree if quad_degree is not None else 2 * (k + 1) + 4
        self.ref = ref_basis(d, k + 1)
        self.n_vel = dim_poly(d, k)
        self.n_ten = dim_poly(d, k + 1)
        self.n_pre = dim_poly(d, k - 1)
        self.n_fd = dim_poly(d - 1, k)
        self.n_modal = d * self.n_vel
        self.n_int = self.n_modal - (d + 1) * self.n_fd

        self.cell_rule = simplex_rule(d, self.quad_degree)
        self.face_rule = simplex_rule(d - 1, self.quad_degree)
        self.cell_phi = self.ref.eval(self.cell_rule.points)  # (nq, n_ten)
        self.cell_dphi = self.ref.grad(self.cell_rule.points)  # (nq, n_ten, d)
        w = self.cell_rule.weights
        # grad_mass[a, b, c] = int_ref d_c phi_a phi_b
        self.grad_mass = np.einsum("q,qac,qb->abc", w, self.cell_dphi, self.cell_phi)

        self.face_points, self.face_weights, face_scale = _face_quadrature(mesh, self.face_rule)
        chi_hat = ref_basis(d - 1, k).eval(self.face_rule.points)
        self.face_chi = chi_hat[None] / np.sqrt(face_scale)[:, None, None]
        pts = self.face_points[mesh.cell_faces]  # (nc, d+1, nqf, d)
        cells = np.arange(mesh.n_cells)[:, None, None]
        self.cell_face_xi = mesh.to_reference(cells, pts)
        self.cell_face_phi = self.ref.eval(self.cell_face_xi) / np.sqrt(mesh.detJ)[:, None, None, None]

        self._build_local_dofs()
        self._build_dofmap()

    # -- construction -------------------------------------------------
    def _face_moment_matrix(self):
        mesh = self.mesh
        cf = mesh.cell_faces
        w = self.face_weights[cf]
        chi = self.face_chi[cf]
        psi = self.cell_face_phi[..., : self.n_vel]
        m = np.einsum("tfq,tfqa,tfqj->tfaj", w, chi, psi)
        n = mesh.normals[cf]  # global face normals
        M = np.einsum("tfaj,tfr->tfarj", m, n)
        return M.reshape(mesh.n_cells, (self.dim + 1) * self.n_fd, self.n_modal)

    def _build_local_dofs(self):
        M = self._face_moment_matrix()
        _, s, vt = np.linalg.svd(M, full_matrices=True)
        ratio = s.min(axis=1) / s.max(axis=1)
        bad = np.flatnonzero(ratio < 1.0 / COND_LIMIT)
        if len(bad):
            raise NumericalError(f"face-moment matrix rank deficient on element {bad[0]}")
        N = np.swapaxes(vt[:, M.shape[1]:, :], 1, 2)  # (nc, n_modal, n_int)
        D = np.concatenate([M, np.swapaxes(N, 1, 2)], axis=1)
        C = np.linalg.inv(D)
        cond = np.linalg.norm(D, axis=(1, 2)) * np.linalg.norm(C, axis=(1, 2))
        bad = np.flatnonzero(~(cond < COND_LIMIT))
        if len(bad):
            raise NumericalError(f"local dof matrix ill-conditioned on element {bad[0]} (cond {cond[bad[0]]:.3g})")
        self.M = M
        self.N = N
        self.D = D
        self.C = C

    def _build_dofmap(self):
        mesh = self.mesh
        nf, nc = mesh.n_faces, mesh.n_cells
        face_dofs = np.arange(nf * self.n_fd).reshape(nf, self.n_fd)
        interior = nf * self.n_fd + np.arange(nc * self.n_int).reshape(nc, self.n_int)
        cell_dofs = np.concatenate([face_dofs[mesh.cell_faces].reshape(nc, -1), interior], axis=1)
        boundary = np.sort(face_dofs[mesh.boundary_faces].ravel())
        self.dofmap = DofMap("hdiv-velocity", self.k, cell_dofs, nf * self.n_fd + nc * self.n_int,
                             boundary, face_dofs, interior)

    # -- helpers --------------------------------------------------------
    @property
    def n_dofs(self):
        return self.dofmap.n_dofs

    def modal(self, x, cells=None):
        """Modal coefficients (nc, d, n_vel) of global vector x."""
        cells = np.arange(self.mesh.n_cells) if cells is None else cells
        a = np.einsum("tml,tl->tm", self.C[cells], x[self.dofmap.cell_dofs[cells]])
        return a.reshape(len(cells), self.dim, self.n_vel)

    def values(self, a, cells, xi):
        """Field values at reference points xi (nc, nq, d) of `cells`: (nc, nq, d)."""
        psi = self.ref.eval(xi, self.n_vel) / np.sqrt(self.mesh.detJ[cells])[:, None, None]
        return np.einsum("tqj,trj->tqr", psi, a)

    def gradients(self, a, cells, xi):
        """Gradients [..., r, c] = d u_r / d x_c at reference points: (nc, nq, d, d)."""
        g = self.ref.grad(xi, self.n_vel)  # (nc, nq, n, d)
        g = np.einsum("tqjh,thc->tqjc", g, self.mesh.jinv[cells])
        g /= np.sqrt(self.mesh.detJ[cells])[:, None, None, None]
        return np.einsum("tqjc,trj->tqrc", g, a)

    def zero(self):
        return DiscreteField(self, np.zeros(self.n_dofs))

    def field_from_modal(self, a):
        """Global vector from cell-wise modal coefficients of an H(div) function.

        Face dofs are taken from the owner cell; `a` must already be normal
        continuous for the result to represent it.
        """
        mesh = self.mesh
        nc = mesh.n_cells
        local = np.einsum("tlm,tm->tl", self.D, a.reshape(nc, -1))
        x = np.zeros(self.n_dofs)
        nface = (self.dim + 1) * self.n_fd
        fdofs = local[:, :nface].reshape(nc, self.dim + 1, self.n_fd)
        owner = mesh.face_cells[:, 0]
        loc = mesh.face_local_index[:, 0]
        x[self.dofmap.face_dofs] = fdofs[owner, loc]
        x[self.dofmap.interior_dofs] = local[:, nface:]
        return DiscreteField(self, x)

    def face_normal_moments(self, func, faces=None):
        """int_e (func . n_e) chi_a for each face (global normal): (nf, n_fd)."""
        faces = np.arange(self.mesh.n_faces) if faces is None else faces
        vals = np.asarray(func(self.face_points[faces]))
        vn = np.einsum("fqr,fr->fq", vals, self.mesh.normals[faces])
        return np.einsum("fq,fq,fqa->fa", self.face_weights[faces], vn, self.face_chi[faces])


class PressureSpace:
    """Discontinuous P_{k-1}; the zero-mean condition is left to the solver."""

    family = "dg"

    def __init__(self, mesh, k, quad_degree=None):
        if k < 1:
            raise ConfigurationError(f"velocity degree must be >= 1, got {k}")
        self.mesh = mesh
        self.k = k
        self.degree = k - 1
        self.dim = mesh.dim
        self.quad_degree = quad_degree if quad_degree is not None else 2 * (k + 1) + 4
        self.n_local = dim_poly(mesh.dim, k - 1)
        self.ref = ref_basis(mesh.dim, max(k - 1, 0))
        nc = mesh.n_cells
        cell_dofs = np.arange(nc * self.n_local).reshape(nc, self.n_local)
        self.dofmap = DofMap("dg-pressure", k - 1, cell_dofs, nc * self.n_local,
                             np.zeros(0, dtype=np.int64), None, cell_dofs)
        # only the constant mode has nonzero mean: int_T q_0 = sqrt|T| * q0_hat * |ref|
        q0 = self.ref.eval(np.zeros((1, mesh.dim)), 1)[0, 0]
        self.means = np.zeros((nc, self.n_local))
        self.means[:, 0] = np.sqrt(mesh.detJ) * q0 * REFERENCE_MEASURE[mesh.dim]

    @property
    def n_dofs(self):
        return self.dofmap.n_dofs

    def modal(self, x, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else cells
        return x[self.dofmap.cell_dofs[cells]]

    def values(self, a, cells, xi):
        q = self.ref.eval(xi, self.n_local) / np.sqrt(self.mesh.detJ[cells])[:, None, None]
        return np.einsum("tqj,tj->tq", q, a)

    def constraint_row(self):
        """c_i = integral of pressure basis function i."""
        return self.means.ravel().copy()

    def constant_vector(self):
        """Coefficients of the constant function 1 (orthonormal modes, so equal to c)."""
        return self.means.ravel().copy()

    def project(self, func, quad_degree=None):
        from .polybasis import project_cells

        qd = quad_degree if quad_degree is not None else self.quad_degree
        return DiscreteField(self, project_cells(func, self.mesh, self.degree, qd).ravel())

    def zero(self):
        return DiscreteField(self, np.zeros(self.n_dofs))


def build_hdiv_dofmap(mesh, k, quad_degree=None):
    return HdivSpace(mesh, k, quad_degree).dofmap


def build_pressure_dofmap(mesh, k):
    return PressureSpace(mesh, k).dofmap


def interpolate_hdiv(space, func):
    """BDM-type interpolant: face moments of v.n match; the cell part is the
    L2-closest completion that also matches moments against grad P_{k-1}."""
    mesh = space.mesh
    d, nc = space.dim, mesh.n_cells
    x = np.zeros(space.n_dofs)
    m = space.face_normal_moments(func)
    x[space.dofmap.face_dofs] = m
    if space.n_int == 0:
        return DiscreteField(space, x)

    pts = mesh.map_points(space.cell_rule.points)
    vals = np.asarray(func(pts))  # (nc, nq, d)
    s = np.sqrt(mesh.detJ)
    psi = space.cell_phi[:, : space.n_vel]
    astar = np.einsum("q,qj,tqr->trj", space.cell_rule.weights, psi, vals) * s[:, None, None]
    astar = astar.reshape(nc, -1)
    # rows of R: modal coefficients of grad q_m, m >= 1, in the [P_k]^d basis
    gm = space.grad_mass[1: space.n_pre, : space.n_vel, :]  # int d_h q_m psi_j
    R = np.einsum("mjh,thr->tmrj", gm, mesh.jinv).reshape(nc, space.n_pre - 1, -1)
    K = np.concatenate([space.M, R], axis=1)
    mloc = m[mesh.cell_faces].reshape(nc, -1)
    rhs = np.concatenate([mloc - np.einsum("tim,tm->ti", space.M, astar),
                          np.zeros((nc, space.n_pre - 1))], axis=1)
    a = astar + np.einsum("tmi,ti->tm", np.linalg.pinv(K), rhs)
    x[space.dofmap.interior_dofs] = np.einsum("tmi,tm->ti", space.N, a)
    return DiscreteField(space, x)


def _points_in_cell(mesh, cell, points):
    points = np.atleast_2d(np.asarray(points, float))
    return mesh.to_reference(np.array([cell]), points[None])[0][None]  # (1, np, d)


def eval_field(field, cell, points):
    """Values of a velocity or pressure field at physical points inside `cell`."""
    space = field.space
    xi = _points_in_cell(space.mesh, cell, points)
    a = space.modal(field.coeffs, np.array([cell]))
    return space.values(a, np.array([cell]), xi)[0]


def eval_divergence(field, cell, points):
    space = field.space
    xi = _points_in_cell(space.mesh, cell, points)
    a = space.modal(field.coeffs, np.array([cell]))
    g = space.gradients(a, np.array([cell]), xi)[0]
    return np.trace(g, axis1=-2, axis2=-1)


def divergence_at_quadrature(field):
    """div u_h at every cell quadrature point: (nc, nq)."""
    space = field.space
    mesh = space.mesh
    cells = np.arange(mesh.n_cells)
    xi = np.broadcast_to(space.cell_rule.points, (mesh.n_cells,) + space.cell_rule.points.shape)
    g = space.gradients(field.local(), cells, xi)
    return np.trace(g, axis1=-2, axis2=-1)
