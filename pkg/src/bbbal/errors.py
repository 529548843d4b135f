"""Exception types shared across the package."""


class BBBError(Exception):
    """Base class for package errors."""


class DomainError(BBBError, ValueError):
    """An argument lies outside the domain of the operation."""


class MatrixError(BBBError, ValueError):
    """A matrix that must be positive (semi)definite is not."""


class FitError(BBBError, RuntimeError):
    """A model fit failed to converge or is ill conditioned."""


class CapacityError(BBBError, MemoryError):
    """An exact enumeration would exceed the configured size guard."""


class DegeneratePoolError(BBBError, RuntimeError):
    """Every remaining candidate has conditional variance at the jitter floor."""


class ConfigError(BBBError, ValueError):
    """A configuration document is malformed or names an invalid value."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")

    def __reduce__(self):
        return type(self), (self.field, self.message), self.__dict__
