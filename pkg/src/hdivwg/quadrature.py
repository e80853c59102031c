"""Quadrature on reference simplices (collapsed Gauss-Jacobi products).

Reference simplices are the unit simplices with vertex 0 at the origin and
vertex i at the i-th unit vector.  Their measures are 1, 1/2 and 1/6.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigurationError, StructuralError

MAX_DEGREE = 20
REFERENCE_MEASURE = {0: 1.0, 1: 1.0, 2: 0.5, 3: 1.0 / 6.0}


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    exact_degree: int

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def barycentric(self):
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n, alpha):
    """Nodes/weights for int_0^1 (1-a)^alpha g(a) da, exact to degree 2n-1."""
    t, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + t) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Rule on the reference simplex of dimension `dim` exact for total degree `degree`."""
    if dim not in (0, 1, 2, 3):
        raise ConfigurationError(f"unsupported simplex dimension {dim}")
    if not 0 <= degree <= MAX_DEGREE:
        raise ConfigurationError(f"quadrature degree must lie in [0, {MAX_DEGREE}], got {degree}")
    if dim == 0:
        return QuadRule(np.zeros((1, 0)), np.ones(1), degree)
    n = max(1, math.ceil((degree + 1) / 2))
    # Duffy collapse: x1 = a1, x2 = a2 (1 - a1), x3 = a3 (1 - a1)(1 - a2)
    axes = [_gauss_jacobi01(n, dim - 1 - i) for i in range(dim)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    a = [g.ravel() for g in grids]
    w = np.prod([g.ravel() for g in wgrid], axis=0)
    pts = np.empty((len(w), dim))
    scale = np.ones(len(w))
    for i in range(dim):
        pts[:, i] = a[i] * scale
        scale = scale * (1.0 - a[i])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(pts, w, 2 * n - 1)


def map_rule(rule, vertices):
    """Physical points and weights of `rule` on the affine simplex `vertices`.

    `vertices` has shape (dim+1, ambient).  Works for cells (dim == ambient)
    and for faces (dim == ambient - 1).
    """
    vertices = np.asarray(vertices, dtype=float)
    dim = vertices.shape[0] - 1
    if dim != rule.dim:
        raise StructuralError(f"rule of dimension {rule.dim} applied to a {dim}-simplex")
    edges = (vertices[1:] - vertices[0]).T  # (ambient, dim)
    measure_scale = math.sqrt(abs(np.linalg.det(edges.T @ edges))) if dim else 1.0
    if measure_scale <= 1e-14 * max(1.0, np.abs(edges).max()) ** dim:
        raise StructuralError("degenerate simplex")
    points = vertices[0] + rule.points @ edges.T
    return points, rule.weights * measure_scale


def integrate(func, vertices, degree):
    """Integrate a scalar or array-valued `func(points)` over an affine simplex."""
    vertices = np.asarray(vertices, dtype=float)
    pts, w = map_rule(simplex_rule(vertices.shape[0] - 1, degree), vertices)
    vals = np.asarray(func(pts))
    return np.tensordot(w, vals, axes=(0, 0))
