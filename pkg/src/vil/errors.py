"""Exception hierarchy shared across the package.

Every error raised by this package derives from VILError so callers can
catch one base type. The CLI maps each subclass to a distinct exit code.
"""


class VILError(Exception):
    """Base class for all package errors."""


class InvalidInputError(VILError):
    """A value violates a documented precondition (bad box, shape, range)."""


class ConfigError(VILError):
    """A configuration value or combination is unusable."""


class ParseError(VILError):
    """A file or payload does not conform to its declared format."""


class MissingFeatureError(VILError):
    """A cache-backed lookup has no entry for the requested key."""


class TransportError(VILError):
    """A remote call failed after exhausting retries.

    Attributes:
        attempts: number of attempts made before giving up.
        status: last HTTP status code observed, or None for connection errors.
        url: endpoint that failed.
    """

    def __init__(self, message, attempts=0, status=None, url=None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status
        self.url = url


class InvalidStateError(VILError):
    """An object's state is inconsistent with the requested operation."""


class PhaseOrderError(VILError):
    """An operation ran before a phase it depends on (e.g. no threshold yet)."""
