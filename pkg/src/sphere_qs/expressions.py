"""A small expression language for fields on the sphere.

Grammar (usual precedence, ``^`` binds tightest and associates to the right,
so ``-x^2`` is ``-(x^2)``)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" args ")" | "(" expr ")"

Names are the coordinates ``x``, ``y``, ``z`` and the constants ``pi`` and
``e``.  Functions are ``sin``, ``cos``, ``exp``, ``sqrt``, ``abs`` and
``cap_bump(cx, cy, cz, r)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExpressionError

VARIABLES = ("x", "y", "z")
CONSTANTS = {"pi": math.pi, "e": math.e}


def _cap_bump(x, y, z, cx, cy, cz, r):
    from .partitions import cap_bump

    def scalar(v):
        a = np.asarray(v, dtype=float)
        if a.size == 0 or np.ptp(a) != 0:
            raise ExpressionError("cap_bump parameters must be constant", "cap_bump", 0)
        return float(a.flat[0])

    pts = np.stack(np.broadcast_arrays(x, y, z), axis=-1).astype(float)
    out = cap_bump(pts.reshape(-1, 3), (scalar(cx), scalar(cy), scalar(cz)), scalar(r))
    return out.reshape(pts.shape[:-1])


FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "cap_bump": (4, None),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Unary, Binary, Call]

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(source: str) -> list[Token]:
    out, pos = [], 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {source[pos]!r}", source, pos)
        if m.lastgroup != "ws":
            out.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(Token("end", "", len(source)))
    return out


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise ExpressionError(message, self.source, tok.pos)

    def take(self, text=None) -> Token:
        tok = self.tok
        if text is not None and tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            self.fail(f"expected {text!r}, found {what}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(f"unexpected {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.text in ("+", "-"):
            op = self.take().text
            return Unary(op, self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.tok.text == "^":
            self.take()
            node = Binary("^", node, self.unary())
        return node

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.take()
            if self.tok.text == "(":
                return self.call(tok)
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in CONSTANTS:
                return Num(CONSTANTS[tok.text])
            if tok.text in FUNCTIONS:
                self.fail(f"function {tok.text!r} needs arguments", tok)
            self.fail(f"unknown identifier {tok.text!r}", tok)
        if tok.text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        self.fail("unexpected end of input" if tok.kind == "end" else f"unexpected {tok.text!r}")

    def call(self, name: Token) -> Node:
        if name.text not in FUNCTIONS:
            self.fail(f"unknown function {name.text!r}", name)
        self.take("(")
        args = []
        if self.tok.text != ")":
            args.append(self.expr())
            while self.tok.text == ",":
                self.take()
                args.append(self.expr())
        self.take(")")
        arity = FUNCTIONS[name.text][0]
        if len(args) != arity:
            self.fail(f"{name.text} takes {arity} argument(s), got {len(args)}", name)
        return Call(name.text, tuple(args))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_PREC = 3
_ATOM_PREC = 5


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    return _ATOM_PREC


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def pretty(node: Node) -> str:
    """Source text for ``node`` with only the parentheses precedence needs."""
    if isinstance(node, Num):
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = pretty(node.operand)
        if _prec(node.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"{node.op}{inner}"
    p = _PREC[node.op]
    left, right = pretty(node.left), pretty(node.right)
    right_assoc = node.op == "^"
    if _prec(node.left) < p or (right_assoc and _prec(node.left) == p):
        left = f"({left})"
    if _prec(node.right) < p or (not right_assoc and _prec(node.right) == p):
        right = f"({right})"
    return f"{left}{node.op}{right}" if node.op == "^" else f"{left} {node.op} {right}"


def evaluate(node: Node, x, y, z):
    """Evaluate on coordinate arrays; non-finite results are left to the caller."""
    if isinstance(node, Num):
        return np.full(np.shape(x), node.value)
    if isinstance(node, Var):
        return np.asarray({"x": x, "y": y, "z": z}[node.name], dtype=float)
    if isinstance(node, Unary):
        v = evaluate(node.operand, x, y, z)
        return -v if node.op == "-" else v
    if isinstance(node, Call):
        args = [evaluate(a, x, y, z) for a in node.args]
        if node.name == "cap_bump":
            return _cap_bump(x, y, z, *args)
        return FUNCTIONS[node.name][1](*args)
    a = evaluate(node.left, x, y, z)
    b = evaluate(node.right, x, y, z)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    return np.power(a, b)


@dataclass(frozen=True)
class FieldExpression:
    source: str
    ast: Node

    def __call__(self, x, y, z):
        with np.errstate(all="ignore"):
            return evaluate(self.ast, x, y, z)

    def __str__(self):
        return pretty(self.ast)


def parse_expression(source: str) -> FieldExpression:
    """Parse ``source`` into a :class:`FieldExpression`."""
    if not source or not source.strip():
        raise ExpressionError("empty expression", source or "", 0)
    return FieldExpression(source, _Parser(source).parse())
