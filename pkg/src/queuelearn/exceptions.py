"""Exception types raised across the package."""


class DimensionMismatch(ValueError):
    """Vector/array dimensions do not agree."""


class NotApproachable(RuntimeError):
    """The supporting half-space cannot be forced by any mixed decision."""

    def __init__(self, value, offset):
        self.value = value
        self.offset = offset
        super().__init__(
            f"half-space not approachable: game value {value:.6g} exceeds offset {offset:.6g}"
        )


class NotSupercritical(ValueError):
    """Mean arrivals lie inside the capacity region, so no separating hyperplane exists."""


class NonSeparable(ValueError):
    """A sample violates the unit-margin separability assumption."""


class InfeasibleThreshold(ValueError):
    """No admission threshold meets the diversion budget."""
