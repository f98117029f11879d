"""Partial derivatives and substitution."""

from __future__ import annotations

from functools import lru_cache
from typing import Mapping, Sequence

from . import core
from .core import ONE, ZERO, Expr, VarId, add, cos, div, mul, neg, pow_, sin


@lru_cache(maxsize=None)
def _d(e: Expr, v: VarId) -> Expr:
    if v not in e.free:
        return ZERO
    op, a = e.op, e.args
    if op == "var":
        return ONE
    if op == "add":
        return add(*(_d(t, v) for t in a))
    if op == "neg":
        return neg(_d(a[0], v))
    if op == "mul":
        terms = []
        for i, f in enumerate(a):
            df = _d(f, v)
            if df is not ZERO:
                terms.append(mul(*a[:i], df, *a[i + 1:]))
        return add(*terms)
    if op == "div":
        num, den = a
        dn, dd = _d(num, v), _d(den, v)
        if dd is ZERO:
            return div(dn, den)
        if dn is ZERO:
            return neg(div(mul(num, dd), pow_(den, 2)))
        return div(add(mul(dn, den), neg(mul(num, dd))), pow_(den, 2))
    if op == "pow":
        b, ex = a
        return mul(core.const(ex), pow_(b, ex - 1), _d(b, v))
    # unary and binary functions
    if op == "atan2":
        y, x = a
        dy, dx = _d(y, v), _d(x, v)
        return div(add(mul(x, dy), neg(mul(y, dx))), add(pow_(x, 2), pow_(y, 2)))
    u = a[0]
    du = _d(u, v)
    if op == "sin":
        return mul(cos(u), du)
    if op == "cos":
        return neg(mul(sin(u), du))
    if op == "tan":
        return mul(add(ONE, pow_(e, 2)), du)
    if op == "sqrt":
        return div(du, mul(2, e))
    if op == "exp":
        return mul(e, du)
    if op == "ln":
        return div(du, u)
    if op == "atan":
        return div(du, add(ONE, pow_(u, 2)))
    raise ValueError(f"cannot differentiate node {op}")


def differentiate(e: Expr, v: VarId) -> Expr:
    """Partial derivative of ``e`` with respect to ``v``."""
    return _d(e, v)


def jacobian(rows: Sequence[Expr], cols: Sequence[VarId]) -> list[list[Expr]]:
    return [[_d(r, c) for c in cols] for r in rows]


def substitute(e: Expr, bindings: Mapping[VarId, Expr]) -> Expr:
    """Simultaneous substitution of variables by expressions."""
    if not bindings:
        return e
    binds = {k: core.as_expr(v) for k, v in bindings.items()}
    keys = frozenset(binds)
    memo: dict = {}
    for n in core.nodes(e):
        if not (n.free & keys):
            memo[id(n)] = n
            continue
        op = n.op
        if op == "var":
            r = binds[n.args[0]]
        else:
            args = [memo[id(c)] if isinstance(c, Expr) else c for c in n.args]
            r = _rebuild(op, args)
        memo[id(n)] = r
    return memo[id(e)]


def substitute_all(exprs: Sequence[Expr], bindings: Mapping[VarId, Expr]) -> list[Expr]:
    return [substitute(e, bindings) for e in exprs]


def _rebuild(op: str, args: list) -> Expr:
    if op == "add":
        return add(*args)
    if op == "mul":
        return mul(*args)
    if op == "neg":
        return neg(args[0])
    if op == "div":
        return div(args[0], args[1])
    if op == "pow":
        return pow_(args[0], args[1])
    return core.func(op, *args)


def rebuild(op: str, args: list) -> Expr:
    return _rebuild(op, args)


def time_shift(e: Expr, kinds=(core.OUTPUT, core.REF)) -> Expr:
    """Time derivative of an expression that depends only on jet variables of
    the given kinds (and parameters): every jet ``w_a`` contributes
    ``w_{a+1} * d/dw_a``."""
    terms = []
    for v in sorted(e.free):
        if v.kind in kinds:
            terms.append(mul(core.var(v.shifted()), _d(e, v)))
        elif v.kind != core.PARAM:
            raise ValueError(f"time_shift: unexpected variable {v}")
    return add(*terms)

