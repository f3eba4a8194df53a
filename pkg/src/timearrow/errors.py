"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a precondition (shape, hermiticity, range)."""


class ContractViolation(RuntimeError):
    """Raised when a computed quantity breaks a numerical contract."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


class PostselectionError(ContractViolation):
    """The post-selection probability of an auxiliary state is numerically zero."""
