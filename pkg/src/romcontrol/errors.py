class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class ResourceError(RuntimeError):
    """Raised when a request exceeds a configured resource cap."""


class OptimizationError(RuntimeError):
    """Raised when an optimizer run cannot continue (e.g. NaN loss)."""
