"""Exception and warning types shared across the package.

Each error class carries the process exit code the CLI uses for it.
"""


class SesIndexError(Exception):
    exit_code = 1


class ConfigError(SesIndexError):
    exit_code = 2


class CatalogError(SesIndexError):
    exit_code = 3


class IngestError(SesIndexError):
    exit_code = 4


class PcaError(SesIndexError):
    exit_code = 5


class IndexBuildError(SesIndexError):
    exit_code = 6


class SpatialError(SesIndexError):
    exit_code = 7


class ReportError(SesIndexError):
    exit_code = 8


class SesIndexWarning(UserWarning):
    """Raised through :mod:`warnings` for recoverable data conditions."""
