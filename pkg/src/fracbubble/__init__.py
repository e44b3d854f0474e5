"""Finite-dimensional reduction toolkit for fractional Lane-Emden bubbles."""

__version__ = "0.1.0"

from .constants import (SUBCRITICAL, SUPERCRITICAL, BubbleParams, ConstantSet, FracParams,  # noqa: E402
                        resolve_constants)
from .errors import (AcceptanceFailure, CapabilityError, ConfigurationError, DomainError,  # noqa: E402
                     FracBubbleError, NumericError, ResolutionError)
from .operators import DomainSpec, apply, build_operator, make_grid, solve  # noqa: E402

__all__ = ["SUBCRITICAL", "SUPERCRITICAL", "BubbleParams", "ConstantSet", "FracParams", "resolve_constants",
           "AcceptanceFailure", "CapabilityError", "ConfigurationError", "DomainError", "FracBubbleError",
           "NumericError", "ResolutionError", "DomainSpec", "apply", "build_operator", "make_grid", "solve"]
