"""Global saddle-point system for the weak-gradient H(div) Stokes scheme.

Find u_h in V_h, p_h in W_h with

    (mu grad_w u_h, grad_w v) - (div v, p_h) = (f, v)
    (div u_h, q)                             = 0

for all test functions.  The zero-mean pressure condition is a Lagrange
multiplier row, so the reduced matrix is

    [ A_ff   -B_f^T   0 ]
    [ -B_f    0       c ]
    [ 0       c^T     0 ]
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .spaces import HdivSpace, PressureSpace
from .weak_gradient import boundary_lifting, iter_blocks

BOUNDARY_AVERAGES = ("lifted", "zero")


@dataclass
class SaddleSystem:
    velocity: object  # HdivSpace (or a Lagrange space for Taylor-Hood)
    pressure: object
    A: sp.csr_matrix
    B: sp.csr_matrix
    c: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mu: float
    boundary_dofs: np.ndarray
    boundary_values: np.ndarray = None
    lift_rhs: np.ndarray = None
    g: object = None
    boundary_average: str = "lifted"
    info: dict = field(default_factory=dict)

    @property
    def n_u(self):
        return self.A.shape[0]

    @property
    def n_p(self):
        return self.B.shape[0]

    @property
    def free_dofs(self):
        mask = np.ones(self.n_u, bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    def kkt(self):
        """Reduced KKT matrix (csc) and right-hand side over free velocity dofs."""
        free, bnd = self.free_dofs, self.boundary_dofs
        xb = self.boundary_values if self.boundary_values is not None else np.zeros(len(bnd))
        A_ff = self.A[free][:, free]
        B_f = self.B[:, free]
        c = sp.csr_matrix(self.c.reshape(-1, 1))
        K = sp.bmat([[A_ff, -B_f.T, None], [-B_f, None, c], [None, c.T, None]], format="csc")
        rhs_u = self.rhs_u.copy()
        if self.lift_rhs is not None:
            rhs_u = rhs_u + self.lift_rhs
        ru = rhs_u[free] - self.A[free][:, bnd] @ xb
        rp = self.rhs_p + self.B[:, bnd] @ xb
        return K, np.concatenate([ru, rp, [0.0]])

    def expand(self, sol):
        """Split a reduced solution into full velocity / pressure vectors and multiplier."""
        nf = len(self.free_dofs)
        u = np.zeros(self.n_u)
        u[self.free_dofs] = sol[:nf]
        if self.boundary_values is not None:
            u[self.boundary_dofs] = self.boundary_values
        p = sol[nf: nf + self.n_p]
        return u, p, float(sol[-1])


def _scatter(rows, cols, vals, shape):
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return m.tocsr()


def assemble_velocity_block(space, mu=1.0):
    """A = mu * sum_T G_T^T G_T over element patches."""
    n = space.n_dofs
    A = sp.csr_matrix((n, n))
    for _, patch, G in iter_blocks(space):
        nb, P = patch.shape
        G = G.reshape(nb, -1, P)
        local = mu * np.matmul(np.swapaxes(G, 1, 2), G)
        idx = np.where(patch < 0, 0, patch)
        rows = np.broadcast_to(idx[:, :, None], local.shape)
        cols = np.broadcast_to(idx[:, None, :], local.shape)
        A = A + _scatter(rows, cols, local, (n, n))
    A.sum_duplicates()
    return A


def assemble_divergence_block(space, pspace):
    """B[m, l] = int q_m div(phi_l)."""
    mesh = space.mesh
    nc, d, nv, npl = mesh.n_cells, space.dim, space.n_vel, pspace.n_local
    gm = space.grad_mass[:nv, :npl, :]  # int q_m d_h psi_j  -> [j, m, h]
    bm = np.einsum("jmh,thr->tmrj", gm, mesh.jinv).reshape(nc, npl, -1)
    local = np.einsum("tmk,tkl->tml", bm, space.C)
    rows = np.broadcast_to(pspace.dofmap.cell_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(space.dofmap.cell_dofs[:, None, :], local.shape)
    return _scatter(rows, cols, local, (pspace.n_dofs, space.n_dofs))


def assemble_load(space, f):
    """(f, v) for every velocity basis function."""
    mesh = space.mesh
    nc, d, nv = mesh.n_cells, space.dim, space.n_vel
    F = np.zeros(space.n_dofs)
    if f is None:
        return F
    x = mesh.map_points(space.cell_rule.points)
    vals = np.asarray(f(x))  # (nc, nq, d)
    psi = space.cell_phi[:, :nv]
    b = np.einsum("q,qj,tqr->trj", space.cell_rule.weights, psi, vals) * np.sqrt(mesh.detJ)[:, None, None]
    local = np.einsum("tml,tm->tl", space.C, b.reshape(nc, -1))
    np.add.at(F, space.dofmap.cell_dofs, local)
    return F


def apply_boundary(system, g=None, boundary_average=None):
    """Fix boundary normal dofs to the face moments of g.n and move the
    tangential lifting of g into the right-hand side."""
    space = system.velocity
    mesh = space.mesh
    if boundary_average is not None:
        system.boundary_average = boundary_average
    if system.boundary_average not in BOUNDARY_AVERAGES:
        raise ConfigurationError(f"boundary_average must be one of {BOUNDARY_AVERAGES}")
    system.g = g
    bfaces = mesh.boundary_faces
    if g is None:
        system.boundary_values = np.zeros(len(system.boundary_dofs))
        system.lift_rhs = None
        return system
    moments = space.face_normal_moments(g, bfaces)
    values = np.zeros(space.n_dofs)
    values[space.dofmap.face_dofs[bfaces]] = moments
    system.boundary_values = values[system.boundary_dofs]
    lift = np.zeros(space.n_dofs)
    if system.boundary_average == "lifted":
        for cells, patch, G in iter_blocks(space):
            L = boundary_lifting(space, g, cells)
            contrib = -system.mu * np.einsum("trcip,trci->tp", G, L)
            keep = patch >= 0
            np.add.at(lift, patch[keep], contrib[keep])
    system.lift_rhs = lift
    return system


def assemble(mesh, k, mu=1.0, f=None, g=None, quad_degree=None, boundary_average="lifted"):
    """Assemble the constrained saddle-point system on `mesh` with degree k."""
    if mu <= 0:
        raise ConfigurationError(f"viscosity must be positive, got {mu}")
    V = HdivSpace(mesh, k, quad_degree)
    Q = PressureSpace(mesh, k, V.quad_degree)
    system = SaddleSystem(
        velocity=V,
        pressure=Q,
        A=assemble_velocity_block(V, mu),
        B=assemble_divergence_block(V, Q),
        c=Q.constraint_row(),
        rhs_u=assemble_load(V, f),
        rhs_p=np.zeros(Q.n_dofs),
        mu=mu,
        boundary_dofs=V.dofmap.boundary_dofs,
        boundary_average=boundary_average,
    )
    return apply_boundary(system, g)
