"""Random perturbations of Lorenz-like flows: integrators, hyperbolicity
diagnostics, perturbed Markov chains and stationary-measure estimators."""

__version__ = "0.1.0"

from .errors import (DegenerateSplittingError, InputError, IntegrationError, NumericalFailure,  # noqa: E402
                     TrappingRegionError)
from .systems import VectorField, list_systems, make_system  # noqa: E402

__all__ = ["__version__", "make_system", "list_systems", "VectorField", "InputError", "IntegrationError",
           "TrappingRegionError", "DegenerateSplittingError", "NumericalFailure"]
