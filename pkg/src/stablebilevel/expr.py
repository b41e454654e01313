"""Arithmetic expression language for problem data.

Expressions are infix strings over the variables ``x1..xn`` (upper level),
``y1..ym`` / ``z1..zm`` (lower level) and the reserved ``nu``.  Supported
operators are ``+ - * /``, the integer power ``a^k`` / ``pow(a, k)`` and the
functions ``max``, ``min``, ``abs`` and ``exp``.

    >>> ast = parse_expr("(y1 - 1/2) * x1")
    >>> eval_expr(ast, {"x1": 1.0, "y1": 1.0})
    0.5
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "NAry",
    "ExprAst",
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "UnboundVariableError",
    "parse_expr",
    "eval_expr",
    "free_vars",
    "to_string",
    "substitute",
    "check_names",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


class ExprDomainError(ExprError, ArithmeticError):
    """Raised when evaluation leaves the finite reals."""


class UnboundVariableError(ExprError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unbound variable {self.name!r}"


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg", "abs", "exp"
    arg: "ExprAst"


@dataclass(frozen=True)
class Binary:
    op: str  # "+", "-", "*", "/"
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Pow:
    base: "ExprAst"
    exponent: int


@dataclass(frozen=True)
class NAry:
    op: str  # "max", "min"
    args: tuple


ExprAst = Union[Const, Var, Unary, Binary, Pow, NAry]

_VAR_RE = re.compile(r"^(?:[xyz][1-9][0-9]*|nu)$")
_FUNCS = {"max", "min", "abs", "exp", "pow"}
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.text, pos)

    def error(self, message, pos=None):
        if pos is None:
            pos = self.peek()[2]
        return ExprSyntaxError(message, self.text, pos)

    def parse(self) -> ExprAst:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise self.error(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Unary("neg", self.unary())
        if kind == "op" and val == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Pow(base, self.integer_literal())
        return base

    def integer_literal(self) -> int:
        sign = 1
        if self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
            sign = -1 if self.advance()[1] == "-" else 1
        kind, val, pos = self.advance()
        if kind != "num" or not val.isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", self.text, pos)
        return sign * int(val)

    def atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            value = float(val)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"numeric literal {val!r} overflows", self.text, pos)
            return Const(value)
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in _FUNCS:
                    raise ExprSyntaxError(f"unknown function {val!r}", self.text, pos)
                return self.call(val, pos)
            if not _VAR_RE.match(val):
                raise ExprSyntaxError(f"unknown identifier {val!r}", self.text, pos)
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", self.text, pos)

    def call(self, name, pos):
        self.expect("(")
        if name == "pow":
            base = self.expr()
            self.expect(",")
            exponent = self.integer_literal()
            self.expect(")")
            return Pow(base, exponent)
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if name in ("abs", "exp"):
            if len(args) != 1:
                raise ExprSyntaxError(f"{name} takes exactly one argument", self.text, pos)
            return Unary(name, args[0])
        if len(args) < 2:
            raise ExprSyntaxError(f"{name} takes at least two arguments", self.text, pos)
        return NAry(name, tuple(args))


def parse_expr(text: str) -> ExprAst:
    """Parse ``text`` into an expression tree.

    Raises:
        ExprSyntaxError: malformed input or unknown identifier; the error
            carries the offending character position.
    """
    if not isinstance(text, str):
        raise TypeError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise ExprDomainError(f"{what} produced a non-finite value")
    return value


def eval_expr(ast: ExprAst, bindings: Mapping[str, float]) -> float:
    """Evaluate ``ast`` under ``bindings`` in IEEE double arithmetic.

    Division by zero and overflow (including ``exp`` saturating) raise
    :class:`ExprDomainError`; no NaN or infinity is ever returned.
    """
    t = type(ast)
    if t is Const:
        return ast.value
    if t is Var:
        try:
            return float(bindings[ast.name])
        except KeyError:
            raise UnboundVariableError(ast.name) from None
    if t is Binary:
        a = eval_expr(ast.left, bindings)
        b = eval_expr(ast.right, bindings)
        op = ast.op
        if op == "+":
            return _checked(a + b, "addition")
        if op == "-":
            return _checked(a - b, "subtraction")
        if op == "*":
            return _checked(a * b, "multiplication")
        if b == 0.0:
            raise ExprDomainError("division by zero")
        return _checked(a / b, "division")
    if t is Unary:
        a = eval_expr(ast.arg, bindings)
        if ast.op == "neg":
            return -a
        if ast.op == "abs":
            return abs(a)
        try:
            return _checked(math.exp(a), "exp")
        except OverflowError:
            raise ExprDomainError("exp overflow") from None
    if t is NAry:
        vals = [eval_expr(arg, bindings) for arg in ast.args]
        return max(vals) if ast.op == "max" else min(vals)
    if t is Pow:
        a = eval_expr(ast.base, bindings)
        k = ast.exponent
        if k < 0 and a == 0.0:
            raise ExprDomainError("division by zero in negative power")
        try:
            return _checked(float(a**k), "power")
        except OverflowError:
            raise ExprDomainError("power overflow") from None
    raise TypeError(f"not an expression node: {ast!r}")


def free_vars(ast: ExprAst) -> set[str]:
    """Return the set of variable names occurring in ``ast``."""
    out: set[str] = set()
    stack = [ast]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, NAry):
            stack.extend(node.args)
    return out


def to_string(ast: ExprAst) -> str:
    """Print ``ast`` in a fully parenthesized form that re-parses to ``ast``."""
    if isinstance(ast, Const):
        if ast.value < 0 or math.copysign(1.0, ast.value) < 0:
            # only reachable for trees not produced by the parser
            return f"(-{abs(ast.value)!r})"
        return repr(ast.value)
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Binary):
        return f"({to_string(ast.left)} {ast.op} {to_string(ast.right)})"
    if isinstance(ast, Unary):
        if ast.op == "neg":
            return f"(-{to_string(ast.arg)})"
        return f"{ast.op}({to_string(ast.arg)})"
    if isinstance(ast, Pow):
        return f"pow({to_string(ast.base)}, {ast.exponent})"
    if isinstance(ast, NAry):
        return f"{ast.op}({', '.join(to_string(a) for a in ast.args)})"
    raise TypeError(f"not an expression node: {ast!r}")


def substitute(ast: ExprAst, values: Mapping[str, float]) -> ExprAst:
    """Replace the variables named in ``values`` by constants."""
    if isinstance(ast, Var):
        if ast.name in values:
            return Const(float(values[ast.name]))
        return ast
    if isinstance(ast, Const):
        return ast
    if isinstance(ast, Binary):
        return Binary(ast.op, substitute(ast.left, values), substitute(ast.right, values))
    if isinstance(ast, Unary):
        return Unary(ast.op, substitute(ast.arg, values))
    if isinstance(ast, Pow):
        return Pow(substitute(ast.base, values), ast.exponent)
    if isinstance(ast, NAry):
        return NAry(ast.op, tuple(substitute(a, values) for a in ast.args))
    raise TypeError(f"not an expression node: {ast!r}")


def check_names(ast: ExprAst, n: int, m: int, allow_nu: bool = True) -> None:
    """Raise :class:`ExprError` if ``ast`` uses a name outside the declared dimensions."""
    for name in sorted(free_vars(ast)):
        if name == "nu":
            if not allow_nu:
                raise ExprError("'nu' is not allowed in this expression")
            continue
        index = int(name[1:])
        limit = n if name[0] == "x" else m
        if index > limit:
            raise ExprError(
                f"variable {name!r} exceeds declared dimension "
                f"({'n' if name[0] == 'x' else 'm'}={limit})"
            )
