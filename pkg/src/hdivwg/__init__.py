"""Stabilizer-free weak-gradient H(div) finite elements for the Stokes equations."""
from .assembly import SaddleSystem, assemble
from .errors import ConfigurationError, NumericalError, SolverError, StructuralError
from .mesh import SimplicialMesh, unit_cube_mesh, unit_square_mesh
from .postproc import ErrorReport, error_norms, infsup_estimate
from .problems import EX1, EX2, EX3, EXAMPLES, ExampleSpec, get_example
from .solver import SolveReport, solve_saddle
from .spaces import DiscreteField, HdivSpace, PressureSpace, interpolate_hdiv
from .taylor_hood import LagrangeSpace, assemble_taylor_hood, solve_taylor_hood
from .weak_gradient import weak_gradient

__version__ = "0.1.0"

__all__ = [
    "SaddleSystem", "assemble", "ConfigurationError", "NumericalError", "SolverError",
    "StructuralError", "SimplicialMesh", "unit_cube_mesh", "unit_square_mesh", "ErrorReport",
    "error_norms", "infsup_estimate", "EX1", "EX2", "EX3", "EXAMPLES", "ExampleSpec",
    "get_example", "SolveReport", "solve_saddle", "DiscreteField", "HdivSpace", "PressureSpace",
    "interpolate_hdiv", "LagrangeSpace", "assemble_taylor_hood", "solve_taylor_hood",
    "weak_gradient",
]
