"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class FracBubbleError(Exception):
    exit_code = 1


class ConfigurationError(FracBubbleError):
    """Invalid parameters, unresolved constants or malformed configuration."""

    exit_code = 2


class NumericError(FracBubbleError):
    """A quadrature, solver or iteration failed to reach its tolerance."""

    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapabilityError(ConfigurationError):
    """Unsupported (domain, operator kind) combination."""


class ResolutionError(NumericError):
    """Grid too coarse for the request (for example a pole too close to the boundary)."""


class DomainError(ConfigurationError):
    """A reduced-energy point violates an admissibility constraint."""


class AcceptanceFailure(FracBubbleError):
    exit_code = 4
