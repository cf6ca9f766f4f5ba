"""Exception types raised by the cavitation solver.

Every solver-specific failure derives from ``CavsolveError`` so the command line
can map it to an exit code. Parameter validation that is not specific to the
solver keeps raising plain ``ValueError``.
"""

from __future__ import annotations

from typing import Any


class CavsolveError(Exception):
    """Base class for all solver errors."""


class ConfigError(CavsolveError, ValueError):
    """A run configuration is missing a field or holds an invalid value.

    The message starts with the dotted path of the offending field, for example
    ``"flow.dt: must be > 0"``.
    """

    def __init__(self, path: str, message: str):
        """Create an error for the field at ``path``."""
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DeterminantCollapseError(CavsolveError, ValueError):
    """A deformation gradient has a non-positive determinant.

    Attributes:
        triangle: index of the first collapsed triangle, or None when the
            determinant was passed in directly (e.g. to ``h_eval``).
        value: the offending determinant.
    """

    def __init__(self, value: float, triangle: int | None = None):
        """Record the offending determinant and, if known, its triangle."""
        self.value = float(value)
        self.triangle = triangle
        where = f" on triangle {triangle}" if triangle is not None else ""
        super().__init__(f"non-positive determinant {self.value:.6g}{where}")


class FlowStalledError(CavsolveError, RuntimeError):
    """The gradient flow could not find an acceptable step above ``min_dt``."""

    def __init__(self, message: str, diagnostics: Any = None):
        """Keep the diagnostics of the last accepted state for reporting."""
        self.diagnostics = diagnostics
        super().__init__(message)


class LinearSolveError(CavsolveError, RuntimeError):
    """Conjugate gradients did not reach the requested tolerance."""

    def __init__(self, residual: float, iterations: int):
        """Record the final relative residual and the iteration count."""
        self.residual = float(residual)
        self.iterations = iterations
        super().__init__(
            f"conjugate gradient did not converge in {iterations} iterations "
            f"(relative residual {self.residual:.3e})"
        )


class ReplayError(CavsolveError, ValueError):
    """A convergence table CSV is missing, empty or malformed."""
