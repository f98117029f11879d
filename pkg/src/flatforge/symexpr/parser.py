"""Recursive-descent parser for the expression grammar.

Precedence, tightest first: ``^`` (right associative), unary minus,
``* /``, ``+ -``; binary operators other than ``^`` associate to the left.
"""

from __future__ import annotations

import re
from fractions import Fraction

from ..errors import MalformedVariable, ParseError, UnknownFunction
from . import core
from .core import FUNCTIONS, VarId

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

_JET = re.compile(r"^(ubar|yd|u|v|y)([0-9]+)(?:_([0-9]+))?$")
_STATE = re.compile(r"^x([0-9]+)$")
_VAR_PREFIX = re.compile(r"^(x|ubar|yd|u|v|y)[0-9]")
_PARAM = re.compile(r"^[a-z][a-z0-9_]*$")

_JET_KIND = {
    "u": core.INPUT, "ubar": core.UBAR, "v": core.NEWINPUT,
    "y": core.OUTPUT, "yd": core.REF,
}


def parse_var(name: str, offset: int | None = None) -> VarId:
    """Map a variable name of the grammar onto its VarId."""
    m = _STATE.match(name)
    if m:
        i = int(m.group(1))
        if i < 1 or m.group(1).startswith("0"):
            raise MalformedVariable(f"bad state index in {name!r}", offset)
        return core.State(i)
    m = _JET.match(name)
    if m:
        kind, j, alpha = m.group(1), m.group(2), m.group(3)
        if j not in ("1", "2"):
            raise MalformedVariable(f"channel index must be 1 or 2 in {name!r}", offset)
        if alpha is not None and (alpha.startswith("0") and alpha != "0"):
            raise MalformedVariable(f"bad derivative order in {name!r}", offset)
        return VarId(_JET_KIND[kind], int(j), int(alpha or 0))
    if _VAR_PREFIX.match(name):
        raise MalformedVariable(f"malformed variable name {name!r}", offset)
    if name in FUNCTIONS:
        raise MalformedVariable(f"function name {name!r} used as a variable", offset)
    if not _PARAM.match(name):
        raise MalformedVariable(f"malformed parameter name {name!r}", offset)
    return core.Param(name)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        n = len(text)
        while True:
            while pos < n and text[pos].isspace():
                pos += 1
            if pos >= n:
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos]!r}", self._byte(pos))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", n))
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", self._byte(pos))

    def error(self, msg):
        _, _, pos = self.peek()
        raise ParseError(msg, self._byte(pos))

    def parse(self):
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", self._byte(pos))
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                e = core.add(e, rhs) if text == "+" else core.sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                if text == "*":
                    e = core.mul(e, rhs)
                else:
                    if rhs.op == "const" and rhs.value == 0:
                        raise ParseError("division by literal zero", self._byte(pos))
                    e = core.div(e, rhs)
            else:
                return e

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return core.neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            ex = self.unary()
            if ex.op != "const":
                raise ParseError("exponent must be a rational constant", self._byte(pos))
            try:
                return core.pow_(base, ex.value)
            except Exception as err:  # zero to a negative power
                raise ParseError(str(err), self._byte(pos)) from None
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return core.const(Fraction(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {text!r}", self._byte(pos))
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} expects {FUNCTIONS[text]} argument(s), got {len(args)}",
                        self._byte(pos),
                    )
                try:
                    return core.func(text, *args)
                except Exception as err:
                    raise ParseError(str(err), self._byte(pos)) from None
            return core.var(parse_var(text, self._byte(pos)))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = text or "end of input"
        raise ParseError(f"unexpected {found!r}", self._byte(pos))


def parse_expr(text: str) -> core.Expr:
    """Parse ``text`` into an expression tree.

    Raises ParseError (with a byte offset), UnknownFunction or
    MalformedVariable.
    """
    return _Parser(text).parse()
