"""Exception hierarchy shared by the library and the CLI.

The CLI maps each class onto an exit code (usage 1, data 2, numerical 3).
"""


class GapfairError(Exception):
    exit_code = 1


class ConfigError(GapfairError):
    """Bad arguments, malformed config file, or an invalid stage composition."""

    exit_code = 1


class DataError(GapfairError, ValueError):
    """Input data is malformed, inconsistent, or too small for the request."""

    exit_code = 2


class NumericalError(GapfairError, ArithmeticError):
    """Training diverged or produced non-finite values."""

    exit_code = 3
