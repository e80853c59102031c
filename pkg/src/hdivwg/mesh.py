"""Structured simplicial meshes of the unit square and unit cube."""
from dataclasses import dataclass
from itertools import permutations
import math

import numpy as np

from .errors import ConfigurationError, StructuralError

MAX_SQUARE_LEVEL = 10
MAX_CUBE_LEVEL = 6
SQUARE_LEVELS = (1, MAX_SQUARE_LEVEL)
CUBE_LEVELS = (1, MAX_CUBE_LEVEL)


@dataclass(frozen=True)
class Face:
    vertices: tuple
    normal: np.ndarray
    measure: float
    cells: tuple  # (owner, neighbor) with neighbor == -1 on the boundary
    diameter: float

    @property
    def is_boundary(self):
        return self.cells[1] < 0


class SimplicialMesh:
    """Conforming simplicial mesh with face connectivity.

    Local face ``i`` of a cell is the face opposite its local vertex ``i``.
    Every face carries one unit normal pointing from its owner (lower cell
    index) towards its neighbor, or outward on the boundary.
    """

    def __init__(self, vertices, cells, level=1):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.dim = self.vertices.shape[1]
        if self.cells.shape[1] != self.dim + 1:
            raise StructuralError("cells must have dim+1 vertices")
        self.level = level
        self._orient()
        self._geometry()
        face_connectivity(self)
        for arr in (self.vertices, self.cells):
            arr.setflags(write=False)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def _orient(self):
        v = self.vertices[self.cells]
        det = np.linalg.det(np.swapaxes(v[:, 1:] - v[:, :1], 1, 2))
        scale = np.abs(v[:, 1:] - v[:, :1]).max() ** self.dim
        if np.any(np.abs(det) <= 1e-14 * scale):
            raise StructuralError("degenerate cell")
        flip = det < 0
        if np.any(flip):
            c = self.cells.copy()
            c[flip, -2], c[flip, -1] = self.cells[flip, -1], self.cells[flip, -2]
            self.cells = c

    def _geometry(self):
        v = self.vertices[self.cells]
        self.origins = v[:, 0].copy()
        self.jacobians = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2).copy()
        self.detJ = np.linalg.det(self.jacobians)
        self.jinv = np.linalg.inv(self.jacobians)
        self.volumes = self.detJ / math.factorial(self.dim)
        diffs = v[:, :, None, :] - v[:, None, :, :]
        self.diameters = np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))
        self.centroids = v.mean(axis=1)

    def map_points(self, ref_points):
        """Physical images of reference points on every cell: (nc, nq, d)."""
        return self.origins[:, None, :] + np.einsum("cij,qj->cqi", self.jacobians, ref_points)

    def to_reference(self, cells, points):
        """Reference coordinates of `points` (..., d) in `cells` (broadcastable)."""
        jinv = self.jinv[cells]
        return np.einsum("...ij,...j->...i", jinv, points - self.origins[cells])

    def face(self, i):
        return Face(
            tuple(int(a) for a in self.faces[i]),
            self.normals[i],
            float(self.face_measures[i]),
            (int(self.face_cells[i, 0]), int(self.face_cells[i, 1])),
            float(self.face_diameters[i]),
        )

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    def locate(self, points, tol=1e-12):
        """Index of a cell containing each point (-1 if none)."""
        from scipy.spatial import cKDTree

        points = np.atleast_2d(np.asarray(points, float))
        tree = cKDTree(self.centroids)
        k = min(self.n_cells, 12 if self.dim == 2 else 40)
        _, cand = tree.query(points, k=k)
        cand = cand.reshape(len(points), -1)
        xi = self.to_reference(cand, points[:, None, :])
        bary = np.concatenate([1 - xi.sum(-1, keepdims=True), xi], axis=-1)
        inside = bary.min(-1) >= -tol
        first = np.where(inside.any(1), inside.argmax(1), -1)
        return np.where(first >= 0, cand[np.arange(len(points)), np.maximum(first, 0)], -1)


def face_connectivity(mesh):
    """Populate faces, normals, measures and cell adjacency of `mesh`."""
    d = mesh.dim
    nc = mesh.n_cells
    local = np.array([[j for j in range(d + 1) if j != i] for i in range(d + 1)])
    all_faces = np.sort(mesh.cells[:, local], axis=2).reshape(-1, d)
    faces, first, inverse, counts = np.unique(
        all_faces, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    if counts.max() > 2:
        raise StructuralError("a face is shared by more than two cells")
    # np.unique orders faces lexicographically; renumber by first occurrence
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    faces = faces[order]
    inverse = rank[inverse]
    cell_faces = inverse.reshape(nc, d + 1)

    face_cells = -np.ones((len(faces), 2), dtype=np.int64)
    local_index = -np.ones((len(faces), 2), dtype=np.int64)
    cell_of = np.repeat(np.arange(nc), d + 1)
    loc_of = np.tile(np.arange(d + 1), nc)
    # first occurrence in cell order is the owner
    f, pos = np.unique(inverse, return_index=True)
    face_cells[f, 0] = cell_of[pos]
    local_index[f, 0] = loc_of[pos]
    second = np.ones(len(inverse), bool)
    second[pos] = False
    face_cells[inverse[second], 1] = cell_of[second]
    local_index[inverse[second], 1] = loc_of[second]

    fv = mesh.vertices[faces]  # (nf, d, d)
    if d == 2:
        t = fv[:, 1] - fv[:, 0]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        meas = np.linalg.norm(t, axis=1)
    else:
        n = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
        meas = 0.5 * np.linalg.norm(n, axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    owner = face_cells[:, 0]
    opposite = mesh.vertices[mesh.cells[owner, local_index[:, 0]]]
    flip = np.einsum("fi,fi->f", opposite - fv[:, 0], n) > 0
    n[flip] *= -1

    diffs = fv[:, :, None, :] - fv[:, None, :, :]
    mesh.faces = faces
    mesh.face_cells = face_cells
    mesh.face_local_index = local_index
    mesh.cell_faces = cell_faces
    mesh.normals = n
    mesh.face_measures = meas
    mesh.face_diameters = np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))
    # +1 where the cell owns the face (normal is outward for it), -1 otherwise
    mesh.cell_face_signs = np.where(face_cells[cell_faces, 0] == np.arange(nc)[:, None], 1.0, -1.0)
    _check_boundary_closure(mesh)
    return mesh


def _check_boundary_closure(mesh):
    # On a convex domain every boundary face lies on a supporting hyperplane;
    # a face left unmatched by a hanging vertex does not.
    b = mesh.boundary_faces
    if len(b) == 0:
        raise StructuralError("mesh has no boundary")
    n = mesh.normals[b]
    support = (mesh.vertices @ n.T).max(axis=0)
    own = np.einsum("fi,fi->f", mesh.vertices[mesh.faces[b, 0]], n)
    if np.any(support - own > 1e-10):
        raise StructuralError("non-conforming mesh: unmatched face inside the domain")


def unit_square_mesh(level):
    """Uniform triangulation with 2**(level-1) squares per side.

    Each square is cut by its top-left to bottom-right diagonal.
    """
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= MAX_SQUARE_LEVEL:
        raise ConfigurationError(f"square mesh level must be in 1..{MAX_SQUARE_LEVEL}, got {level}")
    n = 2 ** (level - 1)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    bl = j * (n + 1) + i
    br = bl + 1
    tl = bl + n + 1
    tr = tl + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([bl, br, tl])
    cells[1::2] = np.column_stack([br, tr, tl])
    return SimplicialMesh(vertices, cells, level)


def _kuhn_tets():
    # Kuhn split of the unit cube around the diagonal (1,0,0)-(0,1,1): the
    # standard split mirrored in x, which gives the face diagonals of the
    # 2D grids' orientation on every cube face.
    tets = []
    for perm in permutations(range(3)):
        s = np.zeros(3, dtype=int)
        path = [s.copy()]
        for axis in perm:
            s[axis] = 1
            path.append(s.copy())
        pts = np.array(path)
        pts[:, 0] = 1 - pts[:, 0]
        tets.append(pts)
    return np.array(tets)  # (6, 4, 3) corner offsets


def unit_cube_mesh(level):
    """Uniform tetrahedral mesh: 2**(level-1) subcubes per side, 6 tets each."""
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= MAX_CUBE_LEVEL:
        raise ConfigurationError(f"cube mesh level must be in 1..{MAX_CUBE_LEVEL}, got {level}")
    n = 2 ** (level - 1)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    I, J, K = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    offsets = _kuhn_tets()
    cells = np.empty((len(I), 6, 4), dtype=np.int64)
    for t in range(6):
        for v in range(4):
            o = offsets[t, v]
            cells[:, t, v] = vid(I + o[0], J + o[1], K + o[2])
    return SimplicialMesh(vertices, cells.reshape(-1, 4), level)


def dump_mesh(mesh, path):
    """Plain-text dump: vertex count, vertices, cell count, cells."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write(f"{mesh.n_cells}\n")
        np.savetxt(fh, mesh.cells, fmt="%d")
