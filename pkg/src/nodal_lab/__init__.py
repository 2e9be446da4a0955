"""Simulation and numerical checks for nodal intersections of random toral waves."""
__version__ = "0.1.0"

from .errors import NodalLabError, NumericalError, ValidationError  # noqa: E402
from .zero_counter import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "NodalLabError", "NumericalError", "ValidationError"]
