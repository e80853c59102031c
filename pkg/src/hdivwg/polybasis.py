"""Orthonormal modal polynomial bases on simplices.

A single hierarchical basis is built on the reference simplex by
orthonormalising centred monomials in graded order (Cholesky-QR, applied
twice).  Because the ordering is graded, the first ``dim P_j`` functions of
the degree-m basis span ``P_j`` for every ``j <= m``.  On a physical element
``T = x0 + J * ref`` the functions ``phi_hat(xi) / sqrt|det J|`` are
orthonormal in ``L2(T)``.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
import math

import numpy as np

from .errors import NumericalError
from .quadrature import simplex_rule


def dim_poly(dim, degree):
    """Dimension of P_degree in `dim` variables (0 for negative degree)."""
    if degree < 0:
        return 0
    return math.comb(degree + dim, dim)


def monomial_exponents(dim, degree):
    exps = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return np.array(exps, dtype=int).reshape(-1, dim)


class RefBasis:
    """Orthonormal basis of P_degree on the reference simplex."""

    def __init__(self, dim, degree):
        self.dim = dim
        self.degree = degree
        self.exps = monomial_exponents(dim, degree)
        self.size = len(self.exps)
        self.center = np.full(dim, 1.0 / (dim + 1))
        rule = simplex_rule(dim, 2 * degree) if dim else None
        if dim == 0:
            self.coeffs = np.ones((1, 1))
            return
        mono = self._monomials(rule.points)
        coeffs = np.eye(self.size)
        for _ in range(2):
            vals = mono @ coeffs
            gram = vals.T @ (rule.weights[:, None] * vals)
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"reference Gram breakdown at degree {degree}") from exc
            coeffs = coeffs @ np.linalg.inv(chol).T
        # sign convention: positive leading coefficient
        coeffs *= np.sign(np.diag(coeffs))
        self.coeffs = coeffs

    def _monomials(self, xi):
        xi = np.asarray(xi, dtype=float) - self.center
        out = np.ones(xi.shape[:-1] + (self.size,))
        for d in range(self.dim):
            out *= xi[..., d, None] ** self.exps[:, d]
        return out

    def _monomial_grads(self, xi):
        xi = np.asarray(xi, dtype=float) - self.center
        out = np.ones(xi.shape[:-1] + (self.size, self.dim))
        for c in range(self.dim):
            for d in range(self.dim):
                e = self.exps[:, d]
                if c == d:
                    out[..., c] *= e * xi[..., d, None] ** np.maximum(e - 1, 0)
                else:
                    out[..., c] *= xi[..., d, None] ** e
        return out

    def eval(self, xi, n=None):
        """Values at reference points, shape (..., n)."""
        c = self.coeffs if n is None else self.coeffs[:, :n]
        return self._monomials(xi) @ c

    def grad(self, xi, n=None):
        """Reference gradients, shape (..., n, dim)."""
        c = self.coeffs if n is None else self.coeffs[:, :n]
        g = self._monomial_grads(xi)
        return np.einsum("...mc,mn->...nc", g, c)


@lru_cache(maxsize=None)
def ref_basis(dim, degree):
    return RefBasis(dim, degree)


@dataclass(frozen=True)
class LocalBasis:
    """Orthonormal basis of P_degree(T) on one affine element.

    ``coeffs`` expresses each function in monomials of the reference
    coordinates centred at the centroid; composed with the element's affine
    map these are centroid-centred monomials scaled by the element size.
    """

    element: int
    degree: int
    origin: np.ndarray
    jacobian: np.ndarray
    ref: RefBasis

    @property
    def size(self):
        return dim_poly(self.ref.dim, self.degree)

    @property
    def coeffs(self):
        return self.ref.coeffs[:, : self.size]

    @property
    def volume_scale(self):
        return abs(np.linalg.det(self.jacobian))

    def to_reference(self, x):
        return np.linalg.solve(self.jacobian, (np.asarray(x, float) - self.origin).T).T

    def eval(self, x):
        xi = self.to_reference(x)
        return self.ref.eval(xi, self.size) / math.sqrt(self.volume_scale)

    def grad(self, x):
        xi = self.to_reference(x)
        g = self.ref.grad(xi, self.size)
        jinv = np.linalg.inv(self.jacobian)
        return np.einsum("...nh,hc->...nc", g, jinv) / math.sqrt(self.volume_scale)


def build_basis(mesh, element, degree):
    """Orthonormal P_degree basis on cell `element` of `mesh`."""
    if mesh.detJ[element] <= 0:
        raise NumericalError(f"element {element} has non-positive volume")
    ref = ref_basis(mesh.dim, max(degree, 0))
    basis = LocalBasis(element, degree, mesh.origins[element], mesh.jacobians[element], ref)
    # Gram check guards against near-degenerate cells
    rule = simplex_rule(mesh.dim, 2 * degree)
    vals = ref.eval(rule.points, basis.size)
    gram = vals.T @ (rule.weights[:, None] * vals)
    if np.abs(gram - np.eye(basis.size)).max() > 1e-10:
        raise NumericalError(f"Gram breakdown on element {element}")
    return basis


def l2_project(func, mesh, element, degree, quad_degree=None):
    """Coefficients of the L2(T) projection of `func` onto P_degree(T).

    `func` maps points (nq, d) to values (nq, ...); vector and matrix valued
    targets are projected componentwise and the coefficient axis comes first.
    """
    basis = build_basis(mesh, element, degree)
    rule = simplex_rule(mesh.dim, quad_degree if quad_degree is not None else 2 * degree + 6)
    x = mesh.origins[element] + rule.points @ mesh.jacobians[element].T
    w = rule.weights * mesh.detJ[element]
    vals = np.asarray(func(x))
    phi = basis.eval(x)
    return np.tensordot(phi * w[:, None], vals, axes=(0, 0))


def project_cells(func, mesh, degree, quad_degree=None):
    """Vectorised L2 projection onto P_degree on every cell: shape (nc, n, ...)."""
    rule = simplex_rule(mesh.dim, quad_degree if quad_degree is not None else 2 * degree + 6)
    n = dim_poly(mesh.dim, degree)
    phi_hat = ref_basis(mesh.dim, degree).eval(rule.points, n)
    x = mesh.map_points(rule.points)
    vals = np.asarray(func(x))
    s = np.sqrt(mesh.detJ)
    wphi = rule.weights[:, None] * phi_hat  # (nq, n)
    out = np.einsum("qn,cq...->cn...", wphi, vals)
    return out * s.reshape((-1,) + (1,) * (out.ndim - 1))
