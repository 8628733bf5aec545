"""Exception hierarchy shared by all findinglab modules.

The three classes map onto the CLI exit codes: configuration problems
exit 2, data/file problems exit 3, numeric/algorithmic failures exit 4.
"""


class FindinglabError(ValueError):
    """Base class for all errors raised by this package."""


class ConfigError(FindinglabError):
    """Invalid configuration value or flag combination."""


class DataError(FindinglabError):
    """Malformed input file, bad record, or missing stage artifact."""


class NumericError(FindinglabError):
    """Violated numeric precondition or failed algorithm run."""
