"""Element-wise weak gradient on the H(div) space.

On a cell T the weak gradient of v is the matrix polynomial in
[P_{k+1}(T)]^{dxd} with

    (grad_w v, tau)_T = -(v, div tau)_T + <{v}, tau n>_{dT}

where {v} is the face average (zero on boundary faces).  Integrating the
volume term by parts gives the form used here,

    (grad_w v, tau)_T = (grad v_T, tau)_T + <{v} - v_T, tau n>_{dT},

which only needs the traces of T and of its face neighbors.  Test tensors
are ``phi_i E_rc`` with ``phi_i`` orthonormal, so the local mass matrix is
the identity and coefficients are plain moments.  Coefficients are laid out
as ``[r, c, i]`` with ``(grad v)_{rc} = d v_r / d x_c``.
"""
from dataclasses import dataclass

import numpy as np

CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class WeakGradOp:
    element: int
    patch_dofs: np.ndarray  # global dofs of T followed by its face neighbors
    matrix: np.ndarray  # (d*d*n_ten, len(patch_dofs))
    shape: tuple  # (d, d, n_ten)


def _neighbors(mesh, cells):
    cf = mesh.cell_faces[cells]
    fc = mesh.face_cells[cf]  # (nb, d+1, 2)
    owner = fc[..., 0] == cells[:, None]
    nbr = np.where(owner, fc[..., 1], fc[..., 0])
    nbr_loc = np.where(owner, mesh.face_local_index[cf, 1], mesh.face_local_index[cf, 0])
    return nbr, nbr_loc


def weak_gradient_blocks(space, cells=None):
    """Weak-gradient matrices for a batch of cells.

    Returns ``(patch_dofs, G)`` with ``patch_dofs`` of shape (nb, (d+2)*n_loc)
    (entries -1 where a boundary face has no neighbor; the matching columns
    of G are zero) and ``G`` of shape (nb, d, d, n_ten, (d+2)*n_loc).
    """
    mesh = space.mesh
    d, nv, nt = space.dim, space.n_vel, space.n_ten
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    nb = len(cells)
    nloc = space.n_modal

    kref = np.transpose(space.grad_mass[:nv, :nt, :], (1, 0, 2))  # int phi_i d_h psi_j
    vol = np.einsum("ijh,thc->tcij", kref, mesh.jinv[cells])

    cf = mesh.cell_faces[cells]
    w = space.face_weights[cf]
    phi = space.cell_face_phi[cells]
    nbr, nbr_loc = _neighbors(mesh, cells)
    boundary = nbr < 0
    nbr_c = np.where(boundary, 0, nbr)
    nbr_l = np.where(boundary, 0, nbr_loc)
    psi_n = space.cell_face_phi[nbr_c, nbr_l][..., :nv]
    nout = mesh.normals[cf] * mesh.cell_face_signs[cells][..., None]

    es = np.einsum("teq,teqi,teqj->teij", w, phi, phi[..., :nv])
    en = np.einsum("teq,teqi,teqj->teij", w, phi, psi_n)
    coef = np.where(boundary, -1.0, -0.5)
    x_self = vol + np.einsum("te,tec,teij->tcij", coef, nout, es)
    x_nbr = np.einsum("te,tec,teij->tecij", np.where(boundary, 0.0, 0.5), nout, en)

    c_self = space.C[cells].reshape(nb, d, nv, nloc)
    c_nbr = space.C[nbr_c].reshape(nb, d + 1, d, nv, nloc)
    g_self = np.einsum("tcij,trjl->trcil", x_self, c_self)
    g_nbr = np.einsum("tecij,terjl->trciel", x_nbr, c_nbr).reshape(nb, d, d, nt, (d + 1) * nloc)
    G = np.concatenate([g_self, g_nbr], axis=-1)

    dofs = space.dofmap.cell_dofs
    patch = np.concatenate(
        [dofs[cells], np.where(boundary[..., None], -1, dofs[nbr_c]).reshape(nb, -1)], axis=1
    )
    return patch, G


def boundary_lifting(space, g, cells=None):
    """Contribution <g, tau n> of boundary data to the weak gradient: (nb, d, d, n_ten)."""
    mesh = space.mesh
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    cf = mesh.cell_faces[cells]
    boundary = mesh.face_cells[cf, 1] < 0
    out = np.zeros((len(cells), space.dim, space.dim, space.n_ten))
    t, e = np.nonzero(boundary)
    if len(t) == 0 or g is None:
        return out
    faces = cf[t, e]
    vals = np.asarray(g(space.face_points[faces]))  # (m, nqf, d)
    nout = mesh.normals[faces]  # boundary normals are outward
    phi = space.cell_face_phi[cells[t], e]
    contrib = np.einsum("mq,mqr,mc,mqi->mrci", space.face_weights[faces], vals, nout, phi)
    np.add.at(out, t, contrib)
    return out


def iter_blocks(space, cells=None):
    """Yield (cells, patch, G) in memory-bounded chunks."""
    mesh = space.mesh
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    per_cell = space.dim ** 2 * space.n_ten * (space.dim + 2) * space.n_modal
    size = max(1, CHUNK_ENTRIES // max(per_cell, (space.dim + 2) ** 2 * space.n_modal ** 2))
    for start in range(0, len(cells), size):
        chunk = cells[start: start + size]
        patch, G = weak_gradient_blocks(space, chunk)
        yield chunk, patch, G


def build_weak_grad(space, element):
    """WeakGradOp of a single cell with the missing-neighbor columns dropped."""
    patch, G = weak_gradient_blocks(space, np.array([element]))
    patch, G = patch[0], G[0]
    keep = patch >= 0
    shape = G.shape[:3]
    return WeakGradOp(int(element), patch[keep], G.reshape(-1, G.shape[-1])[:, keep], shape)


def apply_weak_grad(op, field):
    """Coefficients (d, d, n_ten) of grad_w of `field` on op.element."""
    x = field.coeffs if hasattr(field, "coeffs") else np.asarray(field)
    return (op.matrix @ x[op.patch_dofs]).reshape(op.shape)


def weak_gradient(space, x, g=None):
    """Weak-gradient coefficients (nc, d, d, n_ten) of global vector x.

    With boundary data `g`, boundary faces use g in place of the zero average.
    """
    x = x.coeffs if hasattr(x, "coeffs") else np.asarray(x)
    mesh = space.mesh
    out = np.empty((mesh.n_cells, space.dim, space.dim, space.n_ten))
    xp = np.append(x, 0.0)  # index -1 reads the padding zero
    for cells, patch, G in iter_blocks(space):
        out[cells] = np.einsum("trcip,tp->trci", G, xp[patch])
    if g is not None:
        out += boundary_lifting(space, g)
    return out


def energy_norm(space, x, g=None):
    """|||v||| = sqrt(sum_T ||grad_w v||_T^2)."""
    return float(np.sqrt((weak_gradient(space, x, g) ** 2).sum()))
