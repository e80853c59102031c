"""Manufactured Stokes problems on the unit square and cube.

Every callback takes points of shape (..., d).  ``grad_u`` returns
``[..., r, c] = d u_r / d x_c``.  Forcings are written out by hand.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ExampleSpec:
    name: str
    dim: int
    u: Callable
    grad_u: Callable
    p: Callable
    forcing: Callable  # forcing(x, mu)
    g: Optional[Callable] = None
    description: str = ""

    def f(self, mu):
        return lambda x: self.forcing(x, mu)


def _stack(*comps):
    return np.stack(np.broadcast_arrays(*comps), axis=-1)


# -- ex1: stream-function flow, homogeneous boundary --------------------

def _ab(x):
    a = x[..., 0] - x[..., 0] ** 2
    b = x[..., 1] - x[..., 1] ** 2
    return a, 1 - 2 * x[..., 0], b, 1 - 2 * x[..., 1]


def _ex1_u(x):
    a, a1, b, b1 = _ab(x)
    return _stack(-2 * b1 * b * a ** 2, 2 * a1 * a * b ** 2)


def _ex1_grad(x):
    a, a1, b, b1 = _ab(x)
    row1 = _stack(-4 * a * a1 * b * b1, -2 * a ** 2 * (b1 ** 2 - 2 * b))
    row2 = _stack(2 * b ** 2 * (a1 ** 2 - 2 * a), 4 * a * a1 * b * b1)
    return np.stack([row1, row2], axis=-2)


def _ex1_p(x):
    a, a1, b, b1 = _ab(x)
    return 4 * a * a1 * b * b1


def _ex1_f(x, mu):
    a, a1, b, b1 = _ab(x)
    lap1 = -4 * b * b1 * (a1 ** 2 - 2 * a) + 12 * a ** 2 * b1
    lap2 = -12 * a1 * b ** 2 + 4 * a * a1 * (b1 ** 2 - 2 * b)
    px = 4 * b * b1 * (a1 ** 2 - 2 * a)
    py = 4 * a * a1 * (b1 ** 2 - 2 * b)
    return _stack(-mu * lap1 + px, -mu * lap2 + py)


EX1 = ExampleSpec("ex1", 2, _ex1_u, _ex1_grad, _ex1_p, _ex1_f, None,
                  "2D flow from the stream function (x-x^2)^2 (y-y^2)^2")


# -- ex2: zero velocity, pure gradient forcing --------------------------

def _ex2_u(x):
    return np.zeros(x.shape)


def _ex2_grad(x):
    return np.zeros(x.shape + (x.shape[-1],))


def _ex2_p(x):
    s = x[..., 0]
    return (s - s ** 2) * (s - 0.5)


def _ex2_f(x, mu):
    s = x[..., 0]
    return _stack(3 * (s - s ** 2) - 0.5, np.zeros_like(s))


EX2 = ExampleSpec("ex2", 2, _ex2_u, _ex2_grad, _ex2_p, _ex2_f, None,
                  "u = 0, gradient forcing; velocity must stay zero for every mu")


# -- ex3: quadratic 3D flow with nonhomogeneous boundary data ----------

def _ex3_u(x):
    return _stack(x[..., 1] ** 2, x[..., 2] ** 2, x[..., 0] ** 2)


def _ex3_grad(x):
    z = np.zeros(x.shape[:-1])
    return np.stack([_stack(z, 2 * x[..., 1], z), _stack(z, z, 2 * x[..., 2]),
                     _stack(2 * x[..., 0], z, z)], axis=-2)


def _ex3_p(x):
    return x[..., 1] * x[..., 2] - 0.25


def _ex3_f(x, mu):
    z = np.zeros(x.shape[:-1])
    return _stack(-2 * mu + z, -2 * mu + x[..., 2], -2 * mu + x[..., 1])


EX3 = ExampleSpec("ex3", 3, _ex3_u, _ex3_grad, _ex3_p, _ex3_f, _ex3_u,
                  "u = (y^2, z^2, x^2), p = yz - 1/4 on the unit cube, u = g on the boundary")

EXAMPLES = {"ex1": EX1, "ex2": EX2, "ex3": EX3}


def get_example(name):
    try:
        return EXAMPLES[name]
    except KeyError:
        raise ConfigurationError(f"unknown example '{name}' (choose from {sorted(EXAMPLES)})") from None


def zero_problem(dim):
    """f = 0, g = 0: the unique solution is zero."""
    def zero_vec(x):
        return np.zeros(x.shape)

    return ExampleSpec("zero", dim, zero_vec, lambda x: np.zeros(x.shape + (dim,)),
                       lambda x: np.zeros(x.shape[:-1]), lambda x, mu: np.zeros(x.shape))
