"""Exception hierarchy shared across the package."""


class NeuroBootError(Exception):
    pass


class ParseError(NeuroBootError, ValueError):
    """Malformed expression source.

    ``offset`` is the UTF-8 byte offset of the offending token.
    """

    def __init__(self, message, offset, source=""):
        self.message = message
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class EvalError(NeuroBootError, ArithmeticError):
    """Domain violation while evaluating an expression node."""

    def __init__(self, message, node=None, point=None):
        self.message = message
        self.node = node
        self.point = point
        where = "" if point is None else f" at point {tuple(float(c) for c in point)}"
        what = "" if node is None else f" in '{node}'"
        super().__init__(f"{message}{what}{where}")


class OutOfDomain(NeuroBootError, ValueError):
    pass


class DegenerateGradient(NeuroBootError, ArithmeticError):
    pass


class InvalidArchitecture(NeuroBootError, ValueError):
    pass


class NonPositiveError(NeuroBootError, ValueError):
    pass


class ConfigError(NeuroBootError, ValueError):
    """Invalid run configuration; ``pointer`` is a JSON pointer into the config."""

    def __init__(self, message, pointer=""):
        self.message = message
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer or '/'})")


class NumericalFailure(NeuroBootError, RuntimeError):
    pass
