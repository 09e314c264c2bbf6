"""Scalar arithmetic expressions in the variables ``y`` and ``z``.

Coefficient functions are given in config files as strings such as
``"1 + 0.5*cos(2*pi*y)"``. This module parses them with a small
recursive-descent parser and evaluates them in float64, either on scalars or
elementwise on numpy arrays.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary ("^" unary)?          # right-associative
    primary := NUMBER | "y" | "z" | "pi"
             | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := sin | cos | exp | sqrt | abs

so ``-2^2 == -4`` and ``2^-1 == 0.5``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ArityError, EvaluationError, ExprSyntaxError, UnknownIdentifierError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "parse",
    "evaluate",
    "to_string",
    "to_source",
    "variables",
    "is_constant",
]

VARIABLES = ("y", "z")
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_SYMBOL = {v: k for k, v in BINARY_OPS.items()}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]


# --------------------------------------------------------------------- lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {source[pos]!r}", _byte_offset(source, pos), source
            )
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), _byte_offset(source, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(source, len(source))))
    return tokens


# -------------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def _error(self, message: str, tok: _Token | None = None, cls=ExprSyntaxError):
        tok = tok or self.tok
        return cls(message, tok.offset, self.source)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            found = self.tok.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self._error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self._error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = BINARY_OPS[self.tok.text]
            self.pos += 1
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = BINARY_OPS[self.tok.text]
            self.pos += 1
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._accept("-"):
            return Unary("neg", self.unary())
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self._accept("^"):
            return Binary("pow", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            value = float(tok.text)
            if not math.isfinite(value):
                raise self._error(f"number {tok.text!r} is out of range", tok)
            self.pos += 1
            return Const(value)
        if tok.kind == "name":
            self.pos += 1
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text == "pi":
                return Const(math.pi)
            if tok.text in FUNCTIONS:
                return Unary(tok.text, self._call_args(tok))
            raise self._error(f"unknown identifier {tok.text!r}", tok, UnknownIdentifierError)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        found = tok.text or "end of input"
        raise self._error(f"unexpected token {found!r}")

    def _call_args(self, name_tok: _Token) -> Expr:
        self._expect("(")
        if self._accept(")"):
            raise self._error(f"{name_tok.text}() takes exactly 1 argument (0 given)", name_tok, ArityError)
        args = [self.expr()]
        while self._accept(","):
            args.append(self.expr())
        self._expect(")")
        if len(args) != 1:
            raise self._error(
                f"{name_tok.text}() takes exactly 1 argument ({len(args)} given)", name_tok, ArityError
            )
        return args[0]


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises :class:`ExprSyntaxError` (with a byte ``offset``) on malformed
    input, :class:`UnknownIdentifierError` on names other than ``y``, ``z``,
    ``pi`` and the five functions, and :class:`ArityError` on wrong argument
    counts.
    """
    return _Parser(source).parse()


# ----------------------------------------------------------------- evaluation

_NP_UNARY = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_NP_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "pow": np.power,
}


def _eval(e: Expr, y, z):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        return y if e.name == "y" else z
    if isinstance(e, Unary):
        return _NP_UNARY[e.op](_eval(e.arg, y, z))
    return _NP_BINARY[e.op](_eval(e.left, y, z), _eval(e.right, y, z))


def evaluate(e: Expr, y, z):
    """Evaluate ``e`` at ``(y, z)``; scalars give a float, arrays broadcast.

    Raises :class:`EvaluationError` when any value is not finite.
    """
    y_arr, z_arr = np.broadcast_arrays(np.asarray(y, dtype=np.float64), np.asarray(z, dtype=np.float64))
    with np.errstate(all="ignore"):
        out = np.broadcast_to(_eval(e, y_arr, z_arr), y_arr.shape)
    finite = np.isfinite(out)
    if not finite.all():
        k = np.flatnonzero(~finite.ravel())[0]
        raise EvaluationError(
            f"{to_string(e)} is not finite at (y={float(y_arr.ravel()[k])!r}, z={float(z_arr.ravel()[k])!r})"
        )
    if out.ndim == 0:
        return float(out)
    return np.array(out, dtype=np.float64)


# ------------------------------------------------------------------- printing


def to_string(e: Expr) -> str:
    """Fully parenthesized text that :func:`parse` maps back to an equal-valued tree."""
    if isinstance(e, Const):
        return f"({e.value!r})" if math.copysign(1.0, e.value) < 0 else repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    return f"({to_string(e.left)} {_SYMBOL[e.op]} {to_string(e.right)})"


_PY_FUNC = {"sin": "math.sin", "cos": "math.cos", "exp": "math.exp", "sqrt": "math.sqrt", "abs": "abs"}


def to_source(e: Expr, y: str = "y", z: str = "z") -> str:
    """Python source (``math`` module calls) computing ``e``; used for jitted kernels."""
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return y if e.name == "y" else z
    if isinstance(e, Unary):
        inner = to_source(e.arg, y, z)
        if e.op == "neg":
            return f"(-{inner})"
        return f"{_PY_FUNC[e.op]}({inner})"
    left, right = to_source(e.left, y, z), to_source(e.right, y, z)
    if e.op == "pow":
        return f"math.pow({left}, {right})"
    return f"({left} {_SYMBOL[e.op]} {right})"


def variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Unary):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


def is_constant(e: Expr) -> bool:
    return not variables(e)
