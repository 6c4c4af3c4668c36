"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ExtensorError(Exception):
    """Base class for all errors raised by the package."""


class ShapeMismatch(ExtensorError, ValueError):
    pass


class SlotOutOfRange(ExtensorError, IndexError):
    pass


class IndexOutOfRange(ExtensorError, IndexError):
    pass


class ExprSyntaxError(ExtensorError, ValueError):
    """Malformed expression text. `offset` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownFunction(ExprSyntaxError):
    pass


class UnknownVariable(ExtensorError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown variable"


class DomainError(ExtensorError, ArithmeticError):
    pass


class SingularJacobian(ExtensorError, ArithmeticError):
    pass


class DepthLimit(ExtensorError, RuntimeError):
    pass


class ParseError(ExtensorError, ValueError):
    pass


class ValidationError(ExtensorError, ValueError):
    pass
