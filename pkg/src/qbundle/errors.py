"""Exception hierarchy shared by every qbundle module."""


class QBundleError(Exception):
    """Base class for all errors raised by qbundle."""


class DimMismatch(QBundleError, ValueError):
    pass


class DimensionTooLarge(QBundleError, ValueError):
    pass


class ZeroState(QBundleError, ValueError):
    pass


class NonFinite(QBundleError, ValueError):
    pass


class NonHermitianInput(QBundleError, ValueError):
    pass


class StepFailure(QBundleError, RuntimeError):
    """The propagator could not meet its tolerance at the configured step."""


class BoundaryTime(QBundleError, ValueError):
    """A finite-difference stencil would leave the available time domain."""


class DomainError(QBundleError, ValueError):
    pass


class SingularTrivialization(QBundleError, ValueError):
    pass


class SingularSeed(QBundleError, ValueError):
    pass


class SingularGauge(QBundleError, ValueError):
    pass


class InsufficientStates(QBundleError, ValueError):
    pass


class ParseError(QBundleError, ValueError):
    """Malformed scenario document.

    ``line`` is 1-based when the parser could locate the problem.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(QBundleError, ValueError):
    """Scenario is well formed but violates a schema invariant."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
