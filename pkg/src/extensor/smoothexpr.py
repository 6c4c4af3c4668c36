"""Smooth scalar expressions: parsing, printing and evaluation.

Grammar, loosest binding first::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/' | '·') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?          exponent must be constant
    atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Names are base coordinates ``x1 .. xn`` or fiber components such as
``T1_{2;13}`` (argument 1, upper index 2, lower indices 1 and 3, all 1-based).
``pi`` is a built-in constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

from . import jets
from .errors import ExprSyntaxError, UnknownFunction, UnknownVariable, ValidationError
from .jets import FUNCTIONS, Jet2


@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True, slots=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

CONSTANTS = {"pi": math.pi}

# ---------------------------------------------------------------- variable names

_FIBER_NAME = re.compile(r"T(\d+)_\{([0-9,\s]*);([0-9,\s]*)\}\Z")


def _split_indices(text: str) -> tuple[int, ...]:
    text = text.replace(" ", "")
    if not text:
        return ()
    if "," in text:
        return tuple(int(p) for p in text.split(","))
    return tuple(int(c) for c in text)


def _join_indices(idx: Sequence[int]) -> str:
    if all(i <= 9 for i in idx):
        return "".join(str(i) for i in idx)
    return ",".join(str(i) for i in idx)


def fiber_variable(slot: int, upper: Sequence[int], lower: Sequence[int]) -> str:
    """Name of a fiber component; `slot` and all indices are 1-based."""
    return f"T{slot}_{{{_join_indices(upper)};{_join_indices(lower)}}}"


def coordinate_variable(i: int) -> str:
    """Name of base coordinate `i` (1-based)."""
    return f"x{i}"


def parse_fiber_variable(name: str) -> tuple[int, tuple[int, ...], tuple[int, ...]] | None:
    m = _FIBER_NAME.match(name)
    if m is None:
        return None
    return int(m.group(1)), _split_indices(m.group(2)), _split_indices(m.group(3))


def canonical_name(name: str) -> str:
    parsed = parse_fiber_variable(name)
    if parsed is None:
        return name
    return fiber_variable(*parsed)


# ---------------------------------------------------------------- tokenizer and parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\{[0-9,;\s]*\})?)
  | (?P<op>[-+*/^(),·])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", _byte(src, pos))
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if kind == "op" and text == "·":
                text = "*"
            toks.append(_Tok(kind, text, _byte(src, pos)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte(src, len(src))))
    return toks


def _byte(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text or tok.kind != "op":
            found = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found}", tok.offset)
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Neg(self.unary())
        if tok.kind == "op" and tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            at = self.peek().offset
            exponent = self.unary()
            if variables(exponent):
                raise ExprSyntaxError("exponent must be numeric", at)
            return Pow(base, float(evaluate(exponent, {})))
        return base

    def atom(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().kind == "op" and self.peek().text == "(":
                return self.call(tok)
            if tok.text in CONSTANTS:
                return Num(CONSTANTS[tok.text])
            return Var(canonical_name(tok.text))
        if tok.kind == "op" and tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ExprSyntaxError(f"unexpected {found}", tok.offset)

    def call(self, name: _Tok) -> Expr:
        if name.text not in FUNCTIONS:
            raise UnknownFunction(f"unknown function {name.text!r}", name.offset)
        self.expect("(")
        args = [self.expr()]
        while self.peek().kind == "op" and self.peek().text == ",":
            self.take()
            args.append(self.expr())
        close = self.expect(")")
        arity = FUNCTIONS[name.text][1]
        if len(args) != arity:
            raise ExprSyntaxError(f"{name.text} takes {arity} argument(s), got {len(args)}", close.offset)
        return Call(name.text, tuple(args))


def parse(src: str) -> Expr:
    """Parse expression text. Raises `ExprSyntaxError` carrying a byte offset."""
    if not isinstance(src, str):
        raise ExprSyntaxError("expression must be a string", 0)
    return _Parser(src).parse()


def as_expr(value: Any) -> Expr:
    """Accept an `Expr`, expression text or a plain number."""
    if isinstance(value, (Num, Var, Neg, BinOp, Pow, Call)):
        return value
    if isinstance(value, bool):
        raise ValidationError("booleans are not expressions")
    if isinstance(value, (int, float)):
        return Num(float(value))
    return parse(value)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def _num_text(v: float) -> str:
    if math.isinf(v) or math.isnan(v):
        raise ValidationError(f"cannot print non-finite number {v}")
    return repr(float(v))


def to_source(e: Expr) -> str:
    """Text that parses back to an expression with the same value everywhere."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return "-" + (inner if _prec(e.arg) >= 4 else f"({inner})")
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = to_source(e.left)
        right = to_source(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Pow):
        base = to_source(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        exp = _num_text(e.exponent)
        if e.exponent < 0:
            exp = f"({exp})"
        return f"{base}^{exp}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return out


def check_variables(e: Expr, allowed: Iterable[str], where: str = "expression") -> None:
    unknown = sorted(variables(e) - set(allowed))
    if unknown:
        raise ValidationError(f"{where}: unknown variable(s) {', '.join(unknown)}")


def is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0.0


# ---------------------------------------------------------------- evaluation


def evaluate(e: Expr, bindings: Mapping[str, Any]) -> Any:
    """Reference tree-walking evaluator, generic over the scalar type."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnknownVariable(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, bindings)
    if isinstance(e, BinOp):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return jets.divide(a, b)
    if isinstance(e, Pow):
        return jets.power(evaluate(e.base, bindings), e.exponent)
    if isinstance(e, Call):
        fn = FUNCTIONS[e.fn][0]
        return fn(*(evaluate(a, bindings) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


_NAMESPACE = {
    "_div": jets.divide,
    "_pow": jets.power,
    **{f"_{name}": fn for name, (fn, _) in FUNCTIONS.items()},
}


def _emit(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        return f"({e.value!r})", 5
    if isinstance(e, Var):
        return f"env[{e.name!r}]", 5
    if isinstance(e, Neg):
        code, p = _emit(e.arg)
        return "-" + (code if p >= 4 else f"({code})"), 3
    if isinstance(e, BinOp):
        left, lp = _emit(e.left)
        right, rp = _emit(e.right)
        if e.op == "/":
            return f"_div({left}, {right})", 5
        p = _PREC[e.op]
        if lp < p:
            left = f"({left})"
        if rp <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}", p
    if isinstance(e, Pow):
        base, _ = _emit(e.base)
        return f"_pow({base}, {e.exponent!r})", 5
    if isinstance(e, Call):
        return f"_{e.fn}({', '.join(_emit(a)[0] for a in e.args)})", 5
    raise TypeError(f"not an expression: {e!r}")


class CompiledExpr:
    """An expression turned into a Python function of a bindings mapping."""

    __slots__ = ("expr", "_fn", "constant")

    def __init__(self, e: Expr):
        self.expr = e
        self.constant = e.value if isinstance(e, Num) else None
        try:
            self._fn = eval("lambda env: " + _emit(e)[0], dict(_NAMESPACE))
        except (SyntaxError, RecursionError, MemoryError):
            self._fn = lambda env: evaluate(e, env)

    def __call__(self, env: Mapping[str, Any]) -> Any:
        try:
            return self._fn(env)
        except KeyError as exc:
            raise UnknownVariable(f"unbound variable {exc.args[0]!r}") from None


def compile_expr(e: Expr) -> CompiledExpr:
    return CompiledExpr(e)


def eval_jet2(e: Expr, bindings: Mapping[str, Any], seeds: Sequence[str]) -> Jet2:
    """Value, gradient and Hessian of `e` with respect to the variables in `seeds`.

    Variables that are bound but not seeded are treated as constants.
    """
    m = len(seeds)
    env: dict[str, Any] = dict(bindings)
    for k, name in enumerate(seeds):
        if name not in env:
            raise UnknownVariable(f"seed {name!r} has no value")
        env[name] = Jet2.seed(env[name], k, m)
    out = evaluate(e, env)
    if type(out) is not Jet2:
        out = Jet2.constant(out, m)
    return out


def gradient_fd(e: Expr, bindings: Mapping[str, float], seeds: Sequence[str], step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient, used as an independent check."""
    g = np.zeros(len(seeds))
    for k, name in enumerate(seeds):
        hi = dict(bindings)
        lo = dict(bindings)
        hi[name] = bindings[name] + step
        lo[name] = bindings[name] - step
        g[k] = (evaluate(e, hi) - evaluate(e, lo)) / (2 * step)
    return g


