"""Scalar math expressions of (x, y, z).

Problem coefficients, jump data and exact solutions are written as strings
such as ``"y^2*log(x+2)+4"`` and evaluated on numpy arrays of points.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := number | name | name '(' expr ')' | '(' expr ')'

There is no unary plus.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import EvalError, ParseError

__all__ = [
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expression",
    "parse",
    "evaluate",
    "to_string",
    "FUNCTIONS",
    "CONSTANTS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y", "z")

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Const | Var | Neg | BinOp | Call


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = []  # (kind, text, char_offset)
        pos = 0
        while pos < len(source):
            m = _TOKEN.match(source, pos)
            if m is None:
                raise self._error(f"unexpected character {source[pos]!r}", pos)
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), pos))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def _error(self, message, char_offset):
        byte_offset = len(self.source[:char_offset].encode("utf-8"))
        return ParseError(message, byte_offset, self.source)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, tok, pos = self.peek()
        if tok != text or kind == "end":
            found = "end of input" if kind == "end" else repr(tok)
            raise self._error(f"expected {text!r}, found {found}", pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            if tok == ")":
                raise self._error("unbalanced ')'", pos)
            raise self._error(f"unexpected token {tok!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, tok, pos = self.advance()
        if kind == "num":
            return Const(float(tok))
        if kind == "name":
            if tok in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise self._error(f"function {tok!r} requires '('", self.peek()[2])
                open_pos = self.peek()[2]
                self.advance()
                arg = self.expr()
                if self.peek()[1] != ")":
                    if self.peek()[0] == "end":
                        raise self._error("unbalanced '('", open_pos)
                    self.expect(")")
                self.advance()
                return Call(tok, arg)
            if tok in VARIABLES:
                return Var(tok)
            if tok in CONSTANTS:
                return Const(CONSTANTS[tok])
            raise self._error(f"unknown identifier {tok!r}", pos)
        if tok == "(":
            node = self.expr()
            if self.peek()[1] != ")":
                if self.peek()[0] == "end":
                    raise self._error("unbalanced '('", pos)
                self.expect(")")
            self.advance()
            return node
        if kind == "end":
            raise self._error("unexpected end of input (dangling operator?)", pos)
        raise self._error(f"unexpected token {tok!r}", pos)


# --------------------------------------------------------------------------
# printer

def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _num(v: float) -> str:
    if v.is_integer() and v < 1e15:
        return str(int(v))
    return repr(v)


def _fmt(node: Node, min_prec: int) -> str:
    s = _to_str(node)
    return f"({s})" if _prec(node) < min_prec else s


def _to_str(node: Node) -> str:
    if isinstance(node, Const):
        v = node.value
        if not math.isfinite(v):
            raise ValueError(f"cannot print non-finite constant {v}")
        if math.copysign(1.0, v) < 0:
            return "-" + _num(-v)
        return _num(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _fmt(node.operand, _PREC_NEG)
    if isinstance(node, Call):
        return f"{node.func}({_to_str(node.arg)})"
    p = _prec(node)
    if node.op == "^":
        return f"{_fmt(node.left, _PREC_ATOM)}^{_fmt(node.right, _PREC_NEG)}"
    return f"{_fmt(node.left, p)}{node.op}{_fmt(node.right, p + 1)}"


# --------------------------------------------------------------------------
# evaluation

def _first_bad(mask, x, y, z):
    idx = np.flatnonzero(np.broadcast_to(mask, np.broadcast(x, y, z).shape).ravel())[0]
    xs, ys, zs = (np.broadcast_to(c, np.broadcast(x, y, z).shape).ravel()[idx] for c in (x, y, z))
    return (xs, ys, zs)


def _eval(node: Node, x, y, z):
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        return {"x": x, "y": y, "z": z}[node.name]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, x, y, z))
    if isinstance(node, Call):
        a = _eval(node.arg, x, y, z)
        f = node.func
        if f == "log":
            bad = a <= 0
            if np.any(bad):
                raise EvalError("log of non-positive value", _to_str(node), _first_bad(bad, x, y, z))
            return np.log(a)
        if f == "sqrt":
            bad = a < 0
            if np.any(bad):
                raise EvalError("sqrt of negative value", _to_str(node), _first_bad(bad, x, y, z))
            return np.sqrt(a)
        out = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "abs": np.abs}[f](a)
        return _check_finite(out, node, x, y, z)
    a = _eval(node.left, x, y, z)
    b = _eval(node.right, x, y, z)
    op = node.op
    if op == "+":
        out = np.add(a, b)
    elif op == "-":
        out = np.subtract(a, b)
    elif op == "*":
        out = np.multiply(a, b)
    elif op == "/":
        bad = b == 0
        if np.any(bad):
            raise EvalError("division by zero", _to_str(node), _first_bad(bad, x, y, z))
        out = np.divide(a, b)
    else:
        neg_frac = (a < 0) & (b != np.floor(b))
        if np.any(neg_frac):
            raise EvalError(
                "negative base with non-integer exponent", _to_str(node), _first_bad(neg_frac, x, y, z)
            )
        zero_neg = (a == 0) & (b < 0)
        if np.any(zero_neg):
            raise EvalError("zero to a negative power", _to_str(node), _first_bad(zero_neg, x, y, z))
        out = np.power(a, b)
    return _check_finite(out, node, x, y, z)


def _check_finite(out, node, x, y, z):
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise EvalError("non-finite result", _to_str(node), _first_bad(bad, x, y, z))
    return out


class Expression:
    """A parsed, immutable expression.

    Calling an expression on an array of points of shape ``(..., 3)`` returns
    an array of shape ``(...)``; a single point returns a float.
    """

    __slots__ = ("ast", "source")

    def __init__(self, ast: Node, source: str | None = None):
        object.__setattr__(self, "ast", ast)
        object.__setattr__(self, "source", source if source is not None else _to_str(ast))

    def __setattr__(self, name, value):
        raise AttributeError("Expression is immutable")

    def __call__(self, points):
        return evaluate(self, points)

    def __str__(self):
        return _to_str(self.ast)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.ast, Const)


def parse(source: str) -> Expression:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return Expression(_Parser(source).parse(), source)


def to_string(expr: Expression | Node) -> str:
    """Pretty-print with minimal parentheses; the output re-parses to an
    expression with bitwise-identical evaluation."""
    return _to_str(expr.ast if isinstance(expr, Expression) else expr)


def evaluate(expr: Expression | str, points):
    if isinstance(expr, str):
        expr = parse(expr)
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1:] != (3,):
        raise ValueError(f"points must have trailing dimension 3, got shape {p.shape}")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    with np.errstate(all="ignore"):
        out = _eval(expr.ast, x, y, z)
    out = np.broadcast_to(out, x.shape)
    if out.ndim == 0:
        return float(out)
    return np.array(out, dtype=np.float64)
