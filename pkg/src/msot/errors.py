"""Exception types."""


class TransportError(Exception):
    """Base class for all errors raised by msot."""


class EmptyDomainError(TransportError):
    """A mask selects no cell of the lattice."""


class UnbalancedError(TransportError):
    """Source and target masses differ."""


class InfeasibleSupportError(TransportError):
    """The admitted support set cannot route all of the mass."""


class IterationLimitError(TransportError):
    """The simplex iteration cap was hit; ``plan`` holds the last feasible iterate."""

    def __init__(self, message, plan=None):
        super().__init__(message)
        self.plan = plan


class MultiscaleError(TransportError):
    """Support recovery failed after all retries; ``trace`` has the levels run."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
