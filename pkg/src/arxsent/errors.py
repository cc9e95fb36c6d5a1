"""Exception hierarchy and the CLI exit codes attached to it."""


class ArxsentError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(ArxsentError):
    """Invalid or missing configuration."""

    exit_code = 2


class TransportError(ArxsentError):
    """Network failure talking to the arXiv API after exhausting retries."""

    exit_code = 3


class ModelLoadError(ArxsentError):
    """A classifier could not be resolved or loaded.

    ``kind`` distinguishes a missing artifact from a revision mismatch.
    """

    exit_code = 4

    def __init__(self, message, kind="missing-artifact"):
        super().__init__(message)
        self.kind = kind


class DataError(ArxsentError):
    """Malformed input data or a missing upstream artifact."""

    exit_code = 5
