"""Exception types shared across the package."""


class DomainMismatchError(ValueError):
    """A center, kernel, or domain operation was combined with the wrong variant."""


class TermBudgetError(RuntimeError):
    """A convolution would exceed the configured term-count cap."""


class DegenerateDenominatorError(ArithmeticError):
    """A nonlinearity normalization sum was nonpositive at some center."""


class DegenerateKernelError(ValueError):
    """A Gram matrix was identically zero or otherwise unusable."""


class SampleValidationError(ValueError):
    """Scattered-sample input failed validation (duplicates, bad rows, ...)."""
