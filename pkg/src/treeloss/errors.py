"""Exception types shared across the package."""


class TreeLossError(Exception):
    """Base class for all errors raised by treeloss."""


class InvalidInputError(TreeLossError, ValueError):
    """Malformed data, shapes, or configuration."""


class ParseError(InvalidInputError):
    """A text file could not be parsed.

    ``lineno`` is 1-based and refers to the offending line of ``path``.
    """

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}"
        if lineno is not None:
            where = f"{where}:{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class DepthLimitError(TreeLossError):
    """Cover tree construction needed more levels than the depth cap allows."""


class DivergenceError(TreeLossError, ArithmeticError):
    """SGD produced a non-finite gradient or iterate."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite gradient at iteration {iteration}")
