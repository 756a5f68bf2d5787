"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: wrong shapes, out-of-range parameters, bad config."""


class SingularOperatorError(ArithmeticError):
    """A matrix that must be inverted is singular or too badly conditioned."""


class NormalizationError(ArithmeticError):
    """The partition function vanishes, so expectation values are undefined."""


class UnsupportedCaseError(NotImplementedError):
    """A valid input that this implementation deliberately does not handle."""
