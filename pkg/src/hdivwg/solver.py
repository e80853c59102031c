"""Solvers for the bordered saddle-point system."""
from dataclasses import dataclass, field
import os
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .spaces import DiscreteField

RESIDUAL_TOL = 1e-10


@dataclass
class SolveReport:
    method: str
    relative_residual: float
    residual_momentum: float
    residual_mass: float
    residual_constraint: float
    pressure_mean: float
    multiplier: float
    wall_time: float
    stats: dict = field(default_factory=dict)


def _load_pardiso():
    """Import pypardiso, pointing it at the pip-installed MKL runtime if needed."""
    if "PYPARDISO_MKL_RT" not in os.environ:
        try:
            from importlib.metadata import files
            for f in files("mkl") or ():
                if "libmkl_rt" in f.name:
                    os.environ["PYPARDISO_MKL_RT"] = str(f.locate().resolve())
                    break
        except Exception:
            pass
    try:
        import pypardiso
        return pypardiso
    except (ImportError, OSError):
        return None


def _upper_with_diagonal(K):
    """Upper triangle with every diagonal entry stored (zeros included), as PARDISO requires."""
    up = sp.triu(K, format="coo")
    n = K.shape[0]
    i = np.arange(n)
    up = sp.coo_matrix((np.r_[up.data, np.zeros(n)], (np.r_[up.row, i], np.r_[up.col, i])), shape=K.shape)
    up = up.tocsr()
    up.sort_indices()
    return up


def _pinned(K, b, pin):
    """Drop the bordering row/column and one pressure dof; the pinned system is nonsingular."""
    n = K.shape[0] - 1
    keep = np.r_[0:pin, pin + 1:n]
    K = K.tocsr()
    return K[keep][:, keep].tocsc(), b[keep], keep


def _direct(K, b, n_u, c, z, backend="auto", refine=5, target=1e-13, mu=1.0):
    """Factor the system with one pressure dof pinned, then restore the bordered form.

    z holds the pressure coefficients of the constant function; the pinned dof
    is where z is largest so that fixing it removes the constant mode.  The
    factorization sees diag(mu^-1/2, mu^1/2) K diag(mu^-1/2, mu^1/2), which is
    the mu = 1 matrix; refinement runs on the unscaled system.
    """
    pin = n_u + int(np.argmax(np.abs(z)))
    # z^T B = 0, so the multiplier is fixed by the pressure rows alone
    lam = float(z @ b[n_u:-1]) / float(z @ c)
    b = b.copy()
    b[n_u:-1] -= lam * c
    Kp, bp, keep = _pinned(K, b, pin)
    d = np.where(np.arange(Kp.shape[0]) < n_u, 1.0 / np.sqrt(mu), np.sqrt(mu))
    Ks = (sp.diags(d) @ Kp @ sp.diags(d)).tocsc()
    pardiso = _load_pardiso() if backend in ("auto", "pardiso") else None
    if backend == "pardiso" and pardiso is None:
        raise ConfigurationError("pypardiso backend requested but unavailable")
    if pardiso is not None:
        ps = pardiso.PyPardisoSolver(mtype=-2)
        ps.libmkl.MKL_Set_Num_Threads(1)  # single-threaded solve contract
        # iparm(1)=1 switches off MKL defaults; then METIS ordering,
        # Bunch-Kaufman pivoting, symmetric scaling and weighted matching
        for i, v in ((1, 1), (2, 2), (10, 8), (11, 1), (13, 1), (21, 1)):
            ps.set_iparm(i, v)
        upper = _upper_with_diagonal(Ks)
        apply = lambda r: d * ps.solve(upper, d * r)
        stats = {"backend": "pardiso"}
    else:
        lu = spla.splu(Ks, permc_spec="COLAMD")
        apply = lambda r: d * lu.solve(d * r)
        stats = {"backend": "superlu", "fill_nnz": int(lu.L.nnz + lu.U.nnz)}
    x = apply(bp)
    bnorm = np.linalg.norm(d * bp) or 1.0
    steps = 0
    while steps < refine and np.linalg.norm(d * (bp - Kp @ x)) / bnorm > target:
        x += apply(bp - Kp @ x)
        steps += 1
    stats["refinement_steps"] = steps
    if pardiso is not None:
        stats.update(perturbed_pivots=int(ps.get_iparm(14)),
                     inertia=(int(ps.get_iparm(22)), int(ps.get_iparm(23))))
        ps.free_memory(everything=True)
    sol = np.zeros(K.shape[0])
    sol[keep] = x
    # constants lie in the kernel of B^T: shift p to meet the mean constraint
    p = sol[n_u:-1]
    p += (b[-1] - c @ p) / (c @ z) * z
    sol[-1] = lam
    return sol, stats


def _minres(K, b, n_u, n_p, mu, c_norm2, rtol=1e-13, maxiter=20000):
    diag = K.diagonal()[:n_u]
    inv = np.concatenate([1.0 / np.where(diag > 0, diag, 1.0), np.full(n_p, mu), [mu / max(c_norm2, 1e-300)]])
    M = spla.LinearOperator(K.shape, matvec=lambda v: inv * v, dtype=float)
    it = [0]

    def cb(_):
        it[0] += 1

    x, info = spla.minres(K, b, M=M, rtol=rtol, maxiter=maxiter, callback=cb)
    return x, {"iterations": it[0], "info": int(info)}


def _relative(r, b):
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r) / bn) if bn > 0 else float(np.linalg.norm(r))


def solve_saddle(system, method="direct", tol=RESIDUAL_TOL, backend="auto"):
    """Solve the reduced system; returns (velocity field, pressure field, report)."""
    if method not in ("direct", "minres"):
        raise ConfigurationError(f"unknown solver '{method}'")
    t0 = time.perf_counter()
    K, b = system.kkt()
    n_u = len(system.free_dofs)
    if not b.any():
        sol, stats = np.zeros(len(b)), {}
    elif method == "direct":
        try:
            z = getattr(system.pressure, "constant_vector", None)
            z = z() if z is not None else system.c
            sol, stats = _direct(K.tocsr(), b, n_u, system.c, z, backend, mu=system.mu)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
    else:
        sol, stats = _minres(K, b, n_u, system.n_p, system.mu, float(system.c @ system.c))
    r = K @ sol - b
    # the contract is measured on the viscosity-balanced system (identical at
    # mu = 1); raw ||r||/||b|| bottoms out near eps*||B u|| / ||b|| ~ eps/mu
    d = np.where(np.arange(len(b)) < n_u, 1.0 / np.sqrt(system.mu), np.sqrt(system.mu))
    rel = _relative(d * r, d * b)
    stats["raw_relative_residual"] = _relative(r, b)
    u, p, lam = system.expand(sol)
    report = SolveReport(
        method=method,
        relative_residual=rel,
        residual_momentum=float(np.linalg.norm(r[:n_u])),
        residual_mass=float(np.linalg.norm(r[n_u:-1])),
        residual_constraint=float(abs(r[-1])),
        pressure_mean=float(system.c @ p),
        multiplier=lam,
        wall_time=time.perf_counter() - t0,
        stats=stats,
    )
    if not np.isfinite(rel) or rel > tol:
        raise SolverError(f"{method} solve missed the residual contract: {rel:.3e}", vars(report))
    return DiscreteField(system.velocity, u), DiscreteField(system.pressure, p), report
