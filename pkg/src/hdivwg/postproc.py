"""Error norms, convergence rates and discrete stability diagnostics."""
from dataclasses import dataclass, field, asdict
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .polybasis import project_cells
from .spaces import divergence_at_quadrature
from .weak_gradient import weak_gradient

NORMS = ("l2_u", "energy_u", "l2_p")


@dataclass
class ErrorRow:
    level: int
    l2_u: float
    energy_u: float
    l2_p: float
    qh_p: float
    div_sup: float
    n_dofs: int = 0
    h: float = float("nan")


@dataclass
class ErrorReport:
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def rates(self, name):
        """log2(e_l / e_{l+1}) between consecutive rows; first entry is nan."""
        e = self.column(name)
        out = np.full(len(e), np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.log2(e[:-1] / e[1:])
        return out

    def as_dicts(self):
        return [asdict(r) for r in self.rows]


def _cell_quadrature(space):
    mesh = space.mesh
    rule = space.cell_rule
    x = mesh.map_points(rule.points)
    w = rule.weights[None, :] * mesh.detJ[:, None]
    xi = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    return x, w, xi


def velocity_l2_error(u_exact, u_h):
    space = u_h.space
    x, w, xi = _cell_quadrature(space)
    cells = np.arange(space.mesh.n_cells)
    vals = space.values(u_h.local(), cells, xi)
    return math.sqrt(float(np.einsum("tq,tqr->", w, (vals - u_exact(x)) ** 2)))


def pressure_errors(p_exact, p_h):
    """(||p - p_h||, ||Q_h p - p_h||)."""
    space = p_h.space
    mesh = space.mesh
    rule = _rule_for(space)
    x = mesh.map_points(rule.points)
    w = rule.weights[None, :] * mesh.detJ[:, None]
    xi = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    cells = np.arange(mesh.n_cells)
    vals = space.values(p_h.local(), cells, xi)
    l2 = math.sqrt(float(np.einsum("tq,tq->", w, (vals - p_exact(x)) ** 2)))
    if getattr(space, "family", "dg") == "dg":
        qp = project_cells(p_exact, mesh, space.degree, rule.exact_degree)
        qh = math.sqrt(float(((qp - p_h.local()) ** 2).sum()))
    else:
        # continuous pressure: compare against the elementwise projection via quadrature
        qp = project_cells(p_exact, mesh, space.degree, rule.exact_degree)
        from .polybasis import ref_basis, dim_poly

        n = dim_poly(mesh.dim, space.degree)
        phi = ref_basis(mesh.dim, space.degree).eval(rule.points, n) / np.sqrt(mesh.detJ)[:, None, None]
        qvals = np.einsum("tqn,tn->tq", phi, qp)
        qh = math.sqrt(float(np.einsum("tq,tq->", w, (vals - qvals) ** 2)))
    return l2, qh


def _rule_for(space):
    from .quadrature import simplex_rule

    return simplex_rule(space.mesh.dim, space.quad_degree)


def energy_error(grad_exact, u_h, g=None):
    """Energy error of the velocity.

    H(div): sqrt(sum_T ||Q_h grad u - grad_w u_h||_T^2) with Q_h the L2
    projection onto [P_{k+1}]^{dxd}; on H^1_0 functions the weak gradient
    equals Q_h grad, so this evaluates |||u - u_h||| without lifting u.
    Lagrange spaces use the broken H1 seminorm.
    """
    space = u_h.space
    mesh = space.mesh
    if getattr(space, "family", "") == "hdiv":
        coeff = project_cells(grad_exact, mesh, space.k + 1, space.quad_degree)  # (nc, n, d, d)
        coeff = np.transpose(coeff, (0, 2, 3, 1))
        wg = weak_gradient(space, u_h, g)
        return math.sqrt(float(((coeff - wg) ** 2).sum()))
    x, w, xi = _cell_quadrature(space)
    cells = np.arange(mesh.n_cells)
    grads = space.gradients(u_h.local(), cells, xi)
    return math.sqrt(float(np.einsum("tq,tqrc->", w, (grads - grad_exact(x)) ** 2)))


def divergence_sup(u_h):
    """max |div u_h| over all cell quadrature points."""
    return float(np.abs(divergence_at_quadrature(u_h)).max())


def error_norms(example, u_h, p_h, level=0, g=None):
    l2p, qhp = pressure_errors(example.p, p_h)
    space = u_h.space
    return ErrorRow(
        level=level,
        l2_u=velocity_l2_error(example.u, u_h),
        energy_u=energy_error(example.grad_u, u_h, g),
        l2_p=l2p,
        qh_p=qhp,
        div_sup=divergence_sup(u_h),
        n_dofs=space.n_dofs + p_h.space.n_dofs,
        h=float(space.mesh.diameters.max()),
    )


def _mean_free_basis(c):
    """Orthonormal basis (columns) of the complement of c."""
    q, _ = sla.qr(c.reshape(-1, 1), mode="full")
    return q[:, 1:]


def schur_complement(system):
    """Dense S = B A^{-1} B^T over the free velocity dofs (pressure mass = I)."""
    free = system.free_dofs
    A = system.A[free][:, free].tocsc()
    B = system.B[:, free]
    lu = spla.splu(A)
    X = lu.solve(B.T.toarray())
    return np.asarray(B @ X)


def infsup_estimate(system):
    """Discrete inf-sup constant: sqrt of the smallest eigenvalue of the
    pressure Schur complement restricted to mean-zero pressures.

    A carries the viscosity; the value reported is for mu = 1.
    """
    S = schur_complement(system) * system.mu
    Z = _mean_free_basis(system.c)
    try:
        ev = sla.eigvalsh(Z.T @ S @ Z)
    except sla.LinAlgError as exc:
        raise NumericalError("inf-sup eigen-solve failed") from exc
    if ev[0] <= 0:
        raise NumericalError(f"non-positive Schur eigenvalue {ev[0]:.3e}")
    return float(np.sqrt(ev[0]))


def broken_h1_gram(space):
    """Gram matrix of ||v||_{1,h}^2 = sum ||grad v||_T^2 + sum_e h_e^{-1} ||[v]||_e^2."""
    mesh = space.mesh
    d, nv, nloc, nc = space.dim, space.n_vel, space.n_modal, mesh.n_cells
    n = space.n_dofs
    # broken gradient: int grad psi_i . grad psi_j = sum_c (Jinv^T grad)...
    _, w, _ = _cell_quadrature(space)
    dpsi = space.cell_dphi[:, :nv, :]  # (nq, nv, d) reference
    gphys = np.einsum("qjh,thc->tqjc", dpsi, mesh.jinv) / np.sqrt(mesh.detJ)[:, None, None, None]
    kk = np.einsum("tq,tqic,tqjc->tij", w, gphys, gphys)
    km = np.einsum("rs,tij->trisj", np.eye(d), kk).reshape(nc, nloc, nloc)
    local = np.einsum("tmk,tml,tln->tkn", space.C, km, space.C)
    dofs = space.dofmap.cell_dofs
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    H = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    # jumps: trace operators on each face
    for f in range(mesh.n_faces):
        t0, t1 = mesh.face_cells[f]
        l0, l1 = mesh.face_local_index[f]
        wq = space.face_weights[f] / mesh.face_diameters[f]
        tr = []
        for t, l, sgn in ((t0, l0, 1.0), (t1, l1, -1.0)):
            if t < 0:
                continue
            psi = space.cell_face_phi[t, l][:, :nv]  # (nq, nv)
            T = np.einsum("qj,rs->qrsj", psi, np.eye(d)).reshape(len(wq), d, nloc) @ space.C[t]
            tr.append((sgn * T, dofs[t]))
        ops = np.concatenate([T for T, _ in tr], axis=-1)
        idx = np.concatenate([i for _, i in tr])
        loc = np.einsum("q,qrk,qrl->kl", wq, ops, ops)
        H = H + sp.coo_matrix((loc.ravel(), (np.repeat(idx, len(idx)), np.tile(idx, len(idx)))), shape=(n, n)).tocsr()
    return H


def norm_equivalence_bounds(system):
    """(min, max) of |||v|||^2 / ||v||_{1,h}^2 over the free velocity dofs."""
    free = system.free_dofs
    A = (system.A[free][:, free] / system.mu).toarray()
    H = broken_h1_gram(system.velocity)[free][:, free].toarray()
    ev = sla.eigh(A, H, eigvals_only=True)
    return float(ev[0]), float(ev[-1])
