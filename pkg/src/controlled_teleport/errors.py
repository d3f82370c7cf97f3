"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for malformed inputs: bad registers, unknown qubits, invalid configs."""


class InvariantError(ArithmeticError):
    """Raised when a state or operator violates one of its type invariants."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        self.detail = detail
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
