"""Exception hierarchy shared by all resvc modules."""


class Error(Exception):
    """Base class for all resvc errors."""


class FormatError(Error):
    """A file does not conform to its declared format."""


class ConfigError(Error):
    """A parameter is outside its valid range."""


class InsufficientDataError(Error):
    """Input is too short for the requested operation."""


class AlignmentError(Error):
    """Two inputs that must share a time base or shape do not."""


class StatisticsError(Error):
    """Speaker statistics are missing, degenerate, or non-finite."""


class DegenerateSignalError(Error):
    """A signal has no energy where energy is required."""
