"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, ConvergenceError -> 4.
"""


class RelscaleError(Exception):
    """Base class for all package errors."""


class ConfigError(RelscaleError):
    """Invalid configuration or command-line usage."""


class DataError(RelscaleError):
    """Malformed or inconsistent input data."""


class FormatError(DataError):
    """A file does not conform to its documented format.

    Carries the 1-based line number when the offending line is known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class UnknownCodeError(DataError):
    """A (system, code) pair is not present in the codebook."""


class EmptyCohortError(DataError):
    """No patients remain after applying cohort filters."""


class ConvergenceError(RelscaleError):
    """An optimization run failed to reach its tolerance."""
