"""Expression trees over jet variables.

Nodes are hash-consed: structurally equal trees are the same Python object,
so equality is identity and sub-expressions are shared (the tree is stored as
a DAG).  All construction goes through the smart constructors below, which do
constant folding, flattening of sums/products and merging of repeated terms
or factors.  Nothing else is simplified.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from ..errors import DomainError

STATE = "x"
INPUT = "u"
UBAR = "ubar"
NEWINPUT = "v"
OUTPUT = "y"
REF = "yd"
PARAM = "p"
AUX = "aux"

JET_KINDS = (INPUT, UBAR, NEWINPUT, OUTPUT, REF)

FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "sqrt": 1, "exp": 1, "ln": 1, "atan": 1,
    "atan2": 2,
}


@dataclass(frozen=True, order=True)
class VarId:
    """A scalar coordinate.

    ``kind`` is one of the module constants; ``index`` is the state number or
    channel (1-based), ``order`` the time-derivative order for jet kinds and
    ``name`` is only used by parameters and auxiliary symbols.
    """

    kind: str
    index: int = 0
    order: int = 0
    name: str = ""

    @property
    def is_jet(self) -> bool:
        return self.kind in JET_KINDS

    def shifted(self, by: int = 1) -> "VarId":
        return VarId(self.kind, self.index, self.order + by, self.name)

    def at_order(self, order: int) -> "VarId":
        return VarId(self.kind, self.index, order, self.name)

    def __str__(self) -> str:
        if self.kind == STATE:
            return f"x{self.index}"
        if self.kind in (PARAM, AUX):
            return self.name
        base = f"{self.kind}{self.index}"
        return base if self.order == 0 else f"{base}_{self.order}"

    def __repr__(self) -> str:
        return f"VarId({self})"


def State(i: int) -> VarId:
    return VarId(STATE, i)


def InputJet(j: int, alpha: int = 0) -> VarId:
    return VarId(INPUT, j, alpha)


def UbarJet(j: int, alpha: int = 0) -> VarId:
    return VarId(UBAR, j, alpha)


def NewInputJet(j: int, alpha: int = 0) -> VarId:
    return VarId(NEWINPUT, j, alpha)


def OutputJet(j: int, alpha: int = 0) -> VarId:
    return VarId(OUTPUT, j, alpha)


def RefJet(j: int, alpha: int = 0) -> VarId:
    return VarId(REF, j, alpha)


def Param(name: str) -> VarId:
    return VarId(PARAM, name=name)


def Aux(name: str) -> VarId:
    return VarId(AUX, name=name)


# ---------------------------------------------------------------------------
# nodes

_TABLE: dict = {}


class Expr:
    __slots__ = ("op", "args", "free", "__weakref__")

    def __init__(self, op, args, free):
        self.op = op
        self.args = args
        self.free = free

    # Python operators route through the smart constructors.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Expr({to_text(self)})"

    def __str__(self):
        return to_text(self)

    def __reduce__(self):
        return (_rebuild, (self.op, self.args))

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def value(self) -> Fraction:
        return self.args[0]


def _rebuild(op, args):
    return _make(op, args)


def _make(op, args):
    key = (op, args)
    node = _TABLE.get(key)
    if node is not None:
        return node
    if op == "const":
        free = frozenset()
    elif op == "var":
        free = frozenset(args)
    else:
        free = frozenset().union(*(a.free for a in args if isinstance(a, Expr)))
    return _TABLE.setdefault(key, Expr(op, args, free))


def const(c) -> Expr:
    if isinstance(c, Expr):
        return c
    if isinstance(c, bool):
        c = int(c)
    if isinstance(c, float):
        if not math.isfinite(c):
            raise DomainError(f"non-finite constant {c}")
        c = Fraction(repr(c))
    return _make("const", (Fraction(c),))


def var(v: VarId) -> Expr:
    return _make("var", (v,))


def as_expr(e) -> Expr:
    if isinstance(e, Expr):
        return e
    if isinstance(e, VarId):
        return var(e)
    return const(e)


ZERO = const(0)
ONE = const(1)


def _split(t: Expr):
    """Return (coefficient, Counter of factors) for a product-like term."""
    if t.op == "const":
        return t.args[0], Counter()
    if t.op == "neg":
        c, fs = _split(t.args[0])
        return -c, fs
    if t.op == "mul":
        c = Fraction(1)
        fs: Counter = Counter()
        for f in t.args:
            fc, ff = _split(f) if f.op in ("const", "neg") else (Fraction(1), Counter({f: 1}))
            c *= fc
            fs.update(ff)
        return c, fs
    return Fraction(1), Counter({t: 1})


def _build_term(c: Fraction, fs: Counter) -> Expr:
    factors = []
    for f, m in fs.items():
        factors.extend([f] * m)
    return mul(const(c), *factors)


def add(*terms) -> Expr:
    flat = []
    for t in terms:
        t = as_expr(t)
        if t.op == "add":
            flat.extend(t.args)
        elif t.op == "neg" and t.args[0].op == "add":
            flat.extend(neg(s) for s in t.args[0].args)
        else:
            flat.append(t)
    c = Fraction(0)
    rest = []
    for t in flat:
        if t.op == "const":
            c += t.args[0]
        else:
            rest.append(t)
    if len(rest) > 1:
        splits = [_split(t) for t in rest]
        keys = [frozenset(fs.items()) for _, fs in splits]
        counts = Counter(keys)
        if any(v > 1 for v in counts.values()):
            merged: dict = {}
            order = []
            for (cf, fs), k in zip(splits, keys):
                if k not in merged:
                    merged[k] = [Fraction(0), fs]
                    order.append(k)
                merged[k][0] += cf
            out = []
            for t, k in zip(rest, keys):
                if counts[k] == 1:
                    out.append(t)
                elif k in merged:
                    cf, fs = merged.pop(k)
                    if cf != 0:
                        out.append(_build_term(cf, fs))
            rest = [t for t in out if not (t.op == "const" and t.args[0] == 0)]
            # merged terms may have collapsed to constants
            c += sum((t.args[0] for t in rest if t.op == "const"), Fraction(0))
            rest = [t for t in rest if t.op != "const"]
    if c != 0:
        rest.append(const(c))
    if not rest:
        return ZERO
    if len(rest) == 1:
        return rest[0]
    return _make("add", tuple(rest))


def neg(a) -> Expr:
    a = as_expr(a)
    if a.op == "const":
        return const(-a.args[0])
    if a.op == "neg":
        return a.args[0]
    return _make("neg", (a,))


def sub(a, b) -> Expr:
    return add(a, neg(b))


def _base_exp(f: Expr):
    if f.op == "pow":
        return f.args[0], f.args[1]
    return f, Fraction(1)


def mul(*factors) -> Expr:
    flat = []
    c = Fraction(1)
    stack = [as_expr(f) for f in reversed(factors)]
    while stack:
        f = stack.pop()
        if f.op == "mul":
            stack.extend(reversed(f.args))
        elif f.op == "neg":
            c = -c
            stack.append(f.args[0])
        elif f.op == "const":
            c *= f.args[0]
        else:
            flat.append(f)
    if c == 0:
        return ZERO
    if any(f.op == "div" for f in flat):
        nums = [const(c)] + [f.args[0] if f.op == "div" else f for f in flat]
        dens = [f.args[1] for f in flat if f.op == "div"]
        return div(mul(*nums), mul(*dens))
    if len(flat) > 1:
        bases = Counter(_base_exp(f)[0] for f in flat)
        if any(v > 1 for v in bases.values()):
            exps: dict = {}
            order = []
            for f in flat:
                b, e = _base_exp(f)
                if b not in exps:
                    exps[b] = Fraction(0)
                    order.append(b)
                exps[b] += e
            flat = []
            for b in order:
                if bases[b] == 1:
                    flat.append(pow_(b, exps[b]))
                    continue
                p = pow_(b, exps[b])
                if p.op == "const":
                    c *= p.args[0]
                elif p.op == "mul":
                    cc, fs = _split(p)
                    c *= cc
                    for f, m in fs.items():
                        flat.extend([f] * m)
                else:
                    flat.append(p)
            if c == 0:
                return ZERO
    if not flat:
        return const(c)
    body = flat[0] if len(flat) == 1 else _make("mul", tuple(flat))
    if c == 1:
        return body
    if c == -1:
        return _make("neg", (body,))
    if body.op == "mul":
        return _make("mul", (const(c),) + body.args)
    return _make("mul", (const(c), body))


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if b.op == "const":
        if b.args[0] == 0:
            raise DomainError("division by constant zero")
        if b.args[0] == 1:
            return a
        if b.args[0] == -1:
            return neg(a)
        if a.op == "const":
            return const(a.args[0] / b.args[0])
        return mul(const(1 / b.args[0]), a)
    if a.op == "const" and a.args[0] == 0:
        return ZERO
    if a is b:
        return ONE
    if b.op == "neg":
        return neg(div(a, b.args[0]))
    if b.op == "div":
        return div(mul(a, b.args[1]), b.args[0])
    if a.op == "div":
        return div(a.args[0], mul(a.args[1], b))
    na, nb = _cancel(a, b)
    if na is not None:
        return div(na, nb)
    return _make("div", (a, b))


def _powers(e: Expr) -> tuple:
    """(coefficient, {base: integer exponent}) of a product-like term."""
    c, fs = _split(e)
    out: dict = {}
    for f, m in fs.items():
        b, ex = _base_exp(f)
        if ex.denominator != 1:
            b, ex = f, Fraction(1)
        out[b] = out.get(b, 0) + int(ex) * m
    return c, out


def _cancel(a: Expr, b: Expr):
    """Cancel common factors of numerator and denominator, or (None, None)."""
    if a.op == "const" or (a.op not in ("mul", "neg", "pow") and b.op not in ("mul", "neg", "pow")):
        return None, None
    ca, pa = _powers(a)
    cb, pb = _powers(b)
    common = [f for f in pa if f in pb and pa[f] > 0 and pb[f] > 0]
    if not common:
        return None, None
    for f in common:
        m = min(pa[f], pb[f])
        pa[f] -= m
        pb[f] -= m
    na = mul(const(ca / cb), *(pow_(f, m) for f, m in pa.items() if m))
    nb = mul(*(pow_(f, m) for f, m in pb.items() if m))
    return na, nb


def pow_(b, e) -> Expr:
    b = as_expr(b)
    if isinstance(e, Expr):
        if e.op != "const":
            raise DomainError("exponent must be a rational constant")
        e = e.args[0]
    e = Fraction(e) if not isinstance(e, float) else Fraction(repr(e))
    if e == 0:
        return ONE
    if e == 1:
        return b
    if b.op == "const":
        bv = b.args[0]
        if e.denominator == 1:
            if bv == 0 and e < 0:
                raise DomainError("zero to a negative power")
            return const(bv ** int(e))
        if bv == 1:
            return ONE
        if bv == 0 and e > 0:
            return ZERO
    if b.op == "pow" and e.denominator == 1 and b.args[1].denominator == 1:
        return pow_(b.args[0], b.args[1] * e)
    if b.op == "neg" and e.denominator == 1:
        p = pow_(b.args[0], e)
        return p if int(e) % 2 == 0 else neg(p)
    return _make("pow", (b, e))


_FOLD = {
    ("sin", 0): 0, ("cos", 0): 1, ("tan", 0): 0, ("exp", 0): 1,
    ("ln", 1): 0, ("sqrt", 0): 0, ("sqrt", 1): 1, ("atan", 0): 0,
}


def func(name: str, *args) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name}")
    if len(args) != FUNCTIONS[name]:
        raise ValueError(f"{name} expects {FUNCTIONS[name]} argument(s)")
    args = tuple(as_expr(a) for a in args)
    if len(args) == 1 and args[0].op == "const":
        key = (name, args[0].args[0])
        if key in _FOLD:
            return const(_FOLD[key])
        if name == "sqrt" and args[0].args[0] < 0:
            raise DomainError("sqrt of negative constant")
        if name == "ln" and args[0].args[0] <= 0:
            raise DomainError("ln of non-positive constant")
    if name == "atan2" and all(a.op == "const" and a.args[0] == 0 for a in args):
        raise DomainError("atan2(0, 0)")
    return _make(name, args)


def sin(a):
    return func("sin", a)


def cos(a):
    return func("cos", a)


def tan(a):
    return func("tan", a)


def sqrt(a):
    return func("sqrt", a)


def exp(a):
    return func("exp", a)


def ln(a):
    return func("ln", a)


def atan(a):
    return func("atan", a)


def atan2(y, x):
    return func("atan2", y, x)


def free_vars(e: Expr) -> frozenset:
    return e.free


def free_vars_all(exprs: Iterable[Expr]) -> frozenset:
    return frozenset().union(*(e.free for e in exprs))


def nodes(e: Expr) -> list:
    """Post-order list of distinct sub-expressions (children before parents)."""
    out, seen = [], set()
    stack = [(e, False)]
    while stack:
        n, done = stack.pop()
        if done:
            out.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        if n.op not in ("const", "var"):
            for a in reversed(n.args):
                if isinstance(a, Expr) and id(a) not in seen:
                    stack.append((a, False))
    return out


def dag_size(exprs) -> int:
    if isinstance(exprs, Expr):
        exprs = [exprs]
    seen = set()
    for e in exprs:
        for n in nodes(e):
            seen.add(id(n))
    return len(seen)


# ---------------------------------------------------------------------------
# printing (grammar-compatible; reparses to the identical tree)

_PREC = {"add": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _const_text(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator) if c >= 0 else f"({c.numerator})"
    return f"({c.numerator}/{c.denominator})"


def _exp_text(ex: Fraction) -> str:
    if ex.denominator == 1:
        return str(ex.numerator) if ex > 0 else f"({ex.numerator})"
    return f"({ex.numerator}/{ex.denominator})"


def to_text(e: Expr, names: Mapping[VarId, str] | None = None) -> str:
    memo: dict = {}
    for n in nodes(e):
        op = n.op
        if op == "const":
            r = (_const_text(n.args[0]), 9)
        elif op == "var":
            v = n.args[0]
            r = (names[v] if names and v in names else str(v), 9)
        elif op == "add":
            parts = []
            for k, t in enumerate(n.args):
                if k and t.op == "neg":
                    s, p = memo[id(t.args[0])]
                    parts.append(" - " + (f"({s})" if p <= 1 else s))
                elif k and t.op == "const" and t.args[0] < 0:
                    parts.append(" - " + _const_text(-t.args[0]))
                else:
                    parts.append((" + " if k else "") + memo[id(t)][0])
            r = ("".join(parts), 1)
        elif op == "mul":
            parts = []
            for t in n.args:
                s, p = memo[id(t)]
                # div/neg children are bracketed so the product reparses flat
                parts.append(f"({s})" if p <= 3 else s)
            r = ("*".join(parts), 2)
        elif op == "div":
            a, pa = memo[id(n.args[0])]
            b, pb = memo[id(n.args[1])]
            r = (f"{a if pa == 9 else '(' + a + ')'}/{b if pb == 9 else '(' + b + ')'}", 2)
        elif op == "neg":
            r = (f"-({memo[id(n.args[0])][0]})", 3)
        elif op == "pow":
            a, pa = memo[id(n.args[0])]
            r = (f"{a if pa == 9 else '(' + a + ')'}^{_exp_text(n.args[1])}", 4)
        else:
            r = (f"{op}({', '.join(memo[id(a)][0] for a in n.args)})", 9)
        memo[id(n)] = r
    return memo[id(e)][0]
