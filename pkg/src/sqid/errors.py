"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class ResourceBudgetError(RuntimeError):
    """A lattice enumeration needed more nodes than the configured budget."""

    def __init__(self, message: str, budget: int):
        super().__init__(f"{message} (budget: {budget} nodes)")
        self.budget = budget


class FormatError(ValueError):
    """A binary input file is malformed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
