"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


class NumericalFailureError(ArithmeticError):
    """Raised when a factorization or solve breaks down."""


class ConfigurationError(ValueError):
    """Raised when a pipeline configuration cannot produce a usable model."""
