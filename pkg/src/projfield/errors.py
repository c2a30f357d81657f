"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input rejected by a precondition check."""


class NotSPDError(ValidationError):
    """A matrix expected to be symmetric positive definite failed to factor."""


class ResourceError(RuntimeError):
    """A configured size cap would be exceeded."""


class DegenerateComplexError(ValidationError):
    """The complex has no interior degrees of freedom."""


class QuadratureError(RuntimeError):
    """A quadrature panel straddles a non-smooth locus of the integrand."""
