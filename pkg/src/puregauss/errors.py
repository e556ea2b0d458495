"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class QuadratureNotConverged(ArithmeticError):
    """Successive refinement levels did not agree within tolerance.

    Attributes:
      previous: log-value at the second-to-last refinement level.
      last: log-value at the last refinement level.
    """

    def __init__(self, previous: float, last: float, levels: int):
        self.previous = previous
        self.last = last
        self.levels = levels
        super().__init__(
            f"quadrature did not converge after {levels} levels "
            f"(last two estimates {previous!r}, {last!r})"
        )


class DataError(ValueError):
    """Malformed or out-of-range input data."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""
