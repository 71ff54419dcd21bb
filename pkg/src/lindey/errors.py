"""Exception hierarchy shared by all modules."""


class LindeyError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(LindeyError, ValueError):
    pass


class DimensionMismatch(LindeyError, ValueError):
    pass


class UnsupportedOperator(LindeyError, ValueError):
    pass


class UnsupportedCase(LindeyError, ValueError):
    """Raised by the closed-form oracles for combinations with no known formula."""


class IntegrationFailure(LindeyError, RuntimeError):
    pass


class IntegrityError(LindeyError, RuntimeError):
    """A computed quantity violates a physical constraint beyond roundoff."""


class ResolutionFailure(LindeyError, RuntimeError):
    def __init__(self, message: str, suggested_step: float | None = None):
        super().__init__(message)
        self.suggested_step = suggested_step
