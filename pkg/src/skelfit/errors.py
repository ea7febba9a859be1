"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: argument/usage problems exit 2,
numerical divergence exits 3, file/parse problems exit 4.
"""


class SkelfitError(Exception):
    """Base class for all errors raised by skelfit."""


class ArgumentError(SkelfitError, ValueError):
    """A precondition on an operation's arguments was violated."""


class ParseError(SkelfitError):
    """A file could not be parsed; carries path and (when known) line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc += f" [{path}"
            loc += f":{line}]" if line is not None else "]"
        super().__init__(message + loc)


class EmptyCloudError(ParseError):
    """A loaded point cloud contained zero points."""


class DivergenceError(SkelfitError):
    """The optimizer produced a non-finite loss.

    Carries the last finite parameter state and the partial loss history so
    callers can inspect how far the run got.
    """

    def __init__(self, message, params=None, history=None):
        self.params = params
        self.history = history if history is not None else []
        super().__init__(message)
