"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-facing parameter (level, degree, family, ...)."""


class StructuralError(RuntimeError):
    """Broken mesh topology, degenerate geometry or a singular constrained system."""


class NumericalError(RuntimeError):
    """Ill-conditioned local construction (basis, dof matrix, eigen-solve)."""


class SolverError(RuntimeError):
    """Linear solve failed to reach the residual contract."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}
