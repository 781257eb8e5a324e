"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SearchExhausted(RuntimeError):
    """No design within the search cap satisfies the power constraint."""
