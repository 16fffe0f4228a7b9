"""Exception and warning types shared across the package."""


class TomomaxError(Exception):
    """Base class for all package errors."""


class KindMismatch(TomomaxError):
    pass


class UnphysicalArgument(TomomaxError):
    pass


class DesignMismatch(TomomaxError):
    pass


class CapExceeded(TomomaxError):
    """Raised when a dataset enumeration would exceed the configured cap."""

    def __init__(self, required, cap):
        super().__init__(f"enumeration needs {required} datasets, cap is {cap}")
        self.required = required
        self.cap = cap


class ZeroEvidence(TomomaxError):
    """Every support point of a prior assigns exactly zero likelihood."""


class InnerSolverFailure(TomomaxError):
    pass


class IterationLimit(TomomaxError):
    pass


class NonConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap; best iterate returned."""
