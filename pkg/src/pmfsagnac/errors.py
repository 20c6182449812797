class DomainError(ValueError):
    """Input outside the domain where a model or operation is defined."""


class NoPhaseMatchError(DomainError):
    pass


class InvalidStateError(ValueError):
    """A matrix that fails one or more density-matrix invariants."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("invalid two-qubit state: " + "; ".join(self.failures))

    def __reduce__(self):
        return type(self), (self.failures,)


class DegenerateDataError(ValueError):
    pass


class ConfigError(ValueError):
    pass
