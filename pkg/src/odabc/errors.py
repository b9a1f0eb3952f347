"""Exception types raised across the package."""


class OdabcError(Exception):
    """Base class for all package errors."""


class NumericalFailure(OdabcError):
    """A latent recursion produced a non-finite state."""

    def __init__(self, index, value=None):
        self.index = index
        self.value = value
        super().__init__(f"non-finite latent state at index {index} (value={value!r})")


class UnsupportedKernel(OdabcError):
    """The requested kernel needs something the model does not provide."""


class InitializationError(OdabcError):
    """No usable initial state was found within the retry budget."""


class CapExceeded(OdabcError):
    """A trial loop hit its per-step draw cap while running in strict mode."""


class DataError(OdabcError):
    """Malformed or unusable input data."""
