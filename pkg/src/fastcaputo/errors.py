"""Exception types shared across the package.

The CLI maps these onto exit codes: argument/configuration problems exit
with 2, numerical failures (certification, assembly) with 3.
"""


class InputError(ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(ValueError):
    """A run configuration is inconsistent or unusable (e.g. the kernel
    tolerance is too large for the stability constants to stay positive)."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class ConstructionError(NumericalError):
    """Sum-of-exponentials certification failed after all retries.

    Carries the best error actually achieved in ``achieved_error``.
    """

    def __init__(self, message: str, achieved_error: float):
        super().__init__(message)
        self.achieved_error = achieved_error


class AssemblyError(NumericalError):
    """A linear-system row set could not be assembled or factorised
    (loss of diagonal dominance, singular boundary closure, ...)."""


class StateError(RuntimeError):
    """A history state was driven out of protocol order."""
