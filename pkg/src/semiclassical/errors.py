"""Exception hierarchy shared by all modules."""


class SemiclassicalError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SemiclassicalError, ValueError):
    """A phase-space point lies outside the declared potential domain."""


class UnsupportedTopologyError(SemiclassicalError):
    """The energy level does not bound a single librational well."""


class IntegrationError(SemiclassicalError):
    """Flow integration failed (non-closing orbit, solver failure)."""


class TrajectoryEscapeError(IntegrationError):
    """The trajectory left the potential domain."""


class StiffnessError(IntegrationError):
    """The adaptive step size underflowed."""


class DegenerateCausticError(SemiclassicalError):
    """A caustic is not a simple fold (double zero of the projection Jacobian)."""


class CausticProximityError(SemiclassicalError):
    """A chart amplitude was requested too close to a caustic."""


class ResonanceError(SemiclassicalError):
    """A small divisor fell below the floor while solving a cohomological equation."""

    def __init__(self, message, k=None, divisor=None):
        super().__init__(message)
        self.k = k
        self.divisor = divisor


class NoSolutionError(SemiclassicalError):
    """The quantization defect has no sign change in the requested bracket."""


class DegenerateSignatureError(SemiclassicalError, ValueError):
    """A Hessian is too close to singular for its signature to be defined."""


class AccuracyError(SemiclassicalError):
    """Adaptive quadrature exhausted its budget before converging."""

    def __init__(self, message, estimate=None, bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.bound = bound


class InconsistentInputError(SemiclassicalError):
    """(E, h) does not satisfy the quantization condition to tolerance."""


class ResolutionError(SemiclassicalError):
    """A sampling grid is too coarse for the requested operation."""

    def __init__(self, message, suggested_n=None):
        super().__init__(message)
        self.suggested_n = suggested_n


class GridMismatchError(SemiclassicalError, ValueError):
    """Samples do not live on the operator's grid."""


class ConfigError(SemiclassicalError, ValueError):
    """A run configuration failed validation."""
