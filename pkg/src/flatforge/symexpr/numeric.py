"""Floating-point evaluation, randomized zero tests and generic rank."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import DomainError, InconclusiveDomain, SingularityEncountered, UnboundVariable
from . import core
from .core import Expr, VarId

POLE_TOL = 1e-12
ZERO_TOL = 1e-9
RANK_TOL = 1e-8


def make_rng(rng=None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


@dataclass(frozen=True)
class Domain:
    """Sampling box: closed interval per variable, a default interval for the
    rest, and variables pinned to fixed values (parameters)."""

    intervals: Mapping[VarId, tuple] = field(default_factory=dict)
    default: tuple = (-1.0, 1.0)
    fixed: Mapping[VarId, float] = field(default_factory=dict)

    def __post_init__(self):
        for v, (lo, hi) in list(self.intervals.items()) + [(None, self.default)]:
            if not hi > lo:
                raise ValueError(f"interval for {v or 'default'} must have positive length")

    def interval(self, v: VarId) -> tuple:
        return self.intervals.get(v, self.default)

    def sample(self, rng: np.random.Generator, variables: Iterable[VarId]) -> dict:
        point = {}
        for v in sorted(variables):
            if v in self.fixed:
                point[v] = float(self.fixed[v])
            else:
                lo, hi = self.interval(v)
                point[v] = float(rng.uniform(lo, hi))
        return point

    def with_fixed(self, fixed: Mapping[VarId, float]) -> "Domain":
        return Domain(dict(self.intervals), self.default, {**self.fixed, **fixed})


# ---------------------------------------------------------------------------
# tree-walk evaluation


def _rpow(b: float, ex) -> float:
    if ex.denominator == 1:
        n = int(ex)
        if b == 0.0 and n < 0:
            raise DomainError("zero to a negative power")
        return b ** n
    if b < 0:
        if ex.denominator % 2 == 1:
            r = abs(b) ** float(ex)
            return -r if ex.numerator % 2 else r
        raise DomainError(f"negative base {b} to power {ex}")
    if b == 0.0 and ex < 0:
        raise DomainError("zero to a negative power")
    return b ** float(ex)


def _tan(a: float) -> float:
    if abs(math.cos(a)) < POLE_TOL:
        raise DomainError(f"tan pole at {a}")
    return math.tan(a)


def _atan2(y: float, x: float) -> float:
    if abs(y) < POLE_TOL and abs(x) < POLE_TOL:
        raise DomainError("atan2 at the origin")
    return math.atan2(y, x)


def _sqrt(a: float) -> float:
    if a < 0:
        raise DomainError(f"sqrt of negative value {a}")
    return math.sqrt(a)


def _ln(a: float) -> float:
    if a <= 0:
        raise DomainError(f"ln of non-positive value {a}")
    return math.log(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError(f"exp overflow at {a}") from None


_UNARY = {
    "sin": math.sin, "cos": math.cos, "tan": _tan, "sqrt": _sqrt,
    "exp": _exp, "ln": _ln, "atan": math.atan,
}


def _eval_nodes(roots: Sequence[Expr], point: Mapping[VarId, float], track: bool = False):
    memo: dict = {}
    scale = 0.0
    for root in roots:
        for n in core.nodes(root):
            if id(n) in memo:
                continue
            op, a = n.op, n.args
            if op == "const":
                val = float(a[0])
            elif op == "var":
                try:
                    val = float(point[a[0]])
                except KeyError:
                    raise UnboundVariable(f"no value for {a[0]}") from None
            elif op == "add":
                val = math.fsum(memo[id(t)] for t in a)
            elif op == "mul":
                val = 1.0
                for t in a:
                    val *= memo[id(t)]
            elif op == "neg":
                val = -memo[id(a[0])]
            elif op == "div":
                d = memo[id(a[1])]
                if d == 0.0:
                    raise DomainError("division by zero")
                val = memo[id(a[0])] / d
            elif op == "pow":
                try:
                    val = _rpow(memo[id(a[0])], a[1])
                except OverflowError:
                    raise DomainError("overflow in power") from None
            elif op == "atan2":
                val = _atan2(memo[id(a[0])], memo[id(a[1])])
            else:
                val = _UNARY[op](memo[id(a[0])])
            if not math.isfinite(val):
                raise DomainError(f"non-finite value in {op}")
            if track:
                scale = max(scale, abs(val))
            memo[id(n)] = val
    return memo, scale


def evaluate(e: Expr, point: Mapping[VarId, float]) -> float:
    """Evaluate in IEEE double precision.

    Raises UnboundVariable for a free variable missing from ``point`` and
    DomainError outside the real domain of a node.
    """
    memo, _ = _eval_nodes([e], point)
    return memo[id(e)]


def evaluate_many(exprs: Sequence[Expr], point: Mapping[VarId, float]) -> list[float]:
    memo, _ = _eval_nodes(exprs, point)
    return [memo[id(e)] for e in exprs]


def evaluate_scaled(exprs: Sequence[Expr], point: Mapping[VarId, float]):
    """Values plus the largest intermediate magnitude seen."""
    memo, scale = _eval_nodes(exprs, point, track=True)
    return [memo[id(e)] for e in exprs], scale


# ---------------------------------------------------------------------------
# randomized decisions


def _draw(exprs, dom, rng, trials, fn):
    """Call ``fn(point)`` at ``trials`` good sample points, redrawing points
    that raise DomainError (at most 10*trials redraws)."""
    variables = core.free_vars_all(exprs)
    done = redraws = 0
    while done < trials:
        point = dom.sample(rng, variables)
        try:
            stop = fn(point)
        except DomainError:
            redraws += 1
            if redraws > 10 * trials:
                raise InconclusiveDomain(
                    f"{redraws} sample points fell outside the expression domain"
                ) from None
            continue
        done += 1
        if stop:
            return


def is_zero(e: Expr, dom, trials: int = 20, rng=None) -> bool:
    """Randomized test that ``e`` vanishes identically on ``dom``."""
    if e.op == "const":
        return e.value == 0
    rng = make_rng(rng)
    result = [True]

    def check(point):
        (val,), scale = evaluate_scaled([e], point)
        if abs(val) >= ZERO_TOL * (1.0 + scale):
            result[0] = False
            return True
        return False

    _draw([e], dom, rng, max(1, trials), check)
    return result[0]


def rank_of(a: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank by Gaussian elimination with partial pivoting.

    Rows are first normalized to unit length (zero rows dropped), so the
    pivot threshold ``tol`` is relative to the largest row norm and the result
    does not depend on row scaling.
    """
    a = np.array(a, dtype=float)
    if a.size == 0:
        return 0
    norms = np.linalg.norm(a, axis=1)
    a = a[norms > 0] / norms[norms > 0, None]
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[p, c]) <= tol:
            continue
        a[[r, p]] = a[[p, r]]
        a[r + 1:] -= np.outer(a[r + 1:, c] / a[r, c], a[r])
        r += 1
    return r


def evaluate_matrix(m: Sequence[Sequence[Expr]], point) -> np.ndarray:
    flat = [e for row in m for e in row]
    vals = evaluate_many(flat, point)
    cols = len(m[0]) if m else 0
    return np.array(vals, dtype=float).reshape(len(m), cols)


def numeric_rank(m: Sequence[Sequence[Expr]], dom, samples: int = 10, tol: float = RANK_TOL,
                 rng=None) -> int:
    """Generic rank: maximum over sample points of the pivoted row-reduction
    rank of the evaluated matrix."""
    if not m or not m[0]:
        return 0
    rng = make_rng(rng)
    flat = [e for row in m for e in row]
    best = [0]
    full = min(len(m), len(m[0]))

    def one(point):
        best[0] = max(best[0], rank_of(evaluate_matrix(m, point), tol))
        return best[0] == full

    _draw(flat, dom, rng, max(1, samples), one)
    return best[0]


def sample_matrices(m, dom, samples: int = 10, rng=None) -> list[np.ndarray]:
    rng = make_rng(rng)
    flat = [e for row in m for e in row]
    out = []
    _draw(flat, dom, rng, samples, lambda p: out.append(evaluate_matrix(m, p)))
    return out


# ---------------------------------------------------------------------------
# compilation to straight-line Python


def _guard_trip(guard, what):
    raise SingularityEncountered(f"|denominator| below {guard:g} in {what}")


class Compiled:
    """Straight-line Python function evaluating several expressions at once.

    Shared sub-expressions are computed once.  With ``guard`` set, every
    denominator (division, negative power, tan) whose magnitude drops below
    the threshold raises SingularityEncountered naming the offending
    sub-expression; other failures raise DomainError.
    """

    def __init__(self, exprs: Sequence[Expr], inputs: Sequence[VarId],
                 fixed: Mapping[VarId, float] | None = None, guard: float | None = None):
        self.exprs = tuple(exprs)
        self.inputs = tuple(inputs)
        self.fixed = dict(fixed or {})
        self.guard = guard
        missing = core.free_vars_all(self.exprs) - set(self.inputs) - set(self.fixed)
        if missing:
            raise UnboundVariable("no value for " + ", ".join(sorted(map(str, missing))))
        self._fn, self.source = self._build()

    def _build(self):
        order = []
        seen = set()
        for e in self.exprs:
            for n in core.nodes(e):
                if id(n) not in seen:
                    seen.add(id(n))
                    order.append(n)
        refs: dict = {}
        for n in order:
            if n.op in ("const", "var"):
                continue
            for c in n.args:
                if isinstance(c, Expr):
                    refs[id(c)] = refs.get(id(c), 0) + 1
        outputs = {id(e) for e in self.exprs}
        argname = {v: f"a{i}" for i, v in enumerate(self.inputs)}
        text: dict = {}
        depth: dict = {}
        lines = []
        whats = []
        g = self.guard
        tmp = 0
        consts = []

        def ref(c):
            return text[id(c)]

        def guarded(s, label):
            nonlocal tmp
            name = f"d{tmp}"
            tmp += 1
            lines.append(f"    {name} = {s}")
            if g is not None:
                whats.append(label)
                lines.append(f"    if -{g!r} < {name} < {g!r}: _trip({len(whats) - 1})")
            return name

        for n in order:
            op, a = n.op, n.args
            if op == "const":
                s = repr(float(a[0]))
                text[id(n)] = f"({s})" if s.startswith("-") else s
                depth[id(n)] = 0
                continue
            if op == "var":
                v = a[0]
                text[id(n)] = argname[v] if v in argname else f"({float(self.fixed[v])!r})"
                depth[id(n)] = 0
                continue
            if op == "add":
                s = " + ".join(ref(c) for c in a)
            elif op == "mul":
                s = " * ".join(ref(c) for c in a)
            elif op == "neg":
                s = f"-{ref(a[0])}"
            elif op == "div":
                den = guarded(ref(a[1]), a[1])
                s = f"{ref(a[0])} / {den}"
            elif op == "pow":
                ex = a[1]
                if ex.denominator == 1 and ex > 0:
                    s = f"{ref(a[0])} ** {int(ex)}"
                elif ex.denominator == 1:
                    base = guarded(ref(a[0]), a[0]) if g is not None else ref(a[0])
                    s = f"{base} ** {int(ex)}"
                else:
                    base = guarded(ref(a[0]), a[0]) if (g is not None and ex < 0) else ref(a[0])
                    consts.append(ex)
                    s = f"_rpow({base}, _E{len(consts) - 1})"
            elif op == "tan":
                arg = ref(a[0])
                if g is not None:
                    c = guarded(f"_cos({arg})", n)
                    s = f"_sin({arg}) / {c}"
                else:
                    s = f"_tan({arg})"
            elif op == "atan2":
                s = f"_atan2({ref(a[0])}, {ref(a[1])})"
            else:
                s = f"_{op}({ref(a[0])})"
            d = 1 + max((depth[id(c)] for c in a if isinstance(c, Expr)), default=0)
            if refs.get(id(n), 0) > 1 or id(n) in outputs or d > 40:
                name = f"t{len(lines)}"
                lines.append(f"    {name} = {s}")
                text[id(n)] = name
                depth[id(n)] = 0
            else:
                text[id(n)] = f"({s})"
                depth[id(n)] = d
        ret = ", ".join(text[id(e)] for e in self.exprs)
        args = ", ".join(argname[v] for v in self.inputs)
        src = f"def _f({args}):\n" + "\n".join(lines) + f"\n    return ({ret}{',' if len(self.exprs) == 1 else ''})\n"
        whats_txt = [core.to_text(w) if isinstance(w, Expr) else str(w) for w in whats]

        def _trip(k):
            w = whats_txt[k]
            if len(w) > 120:
                w = w[:117] + "..."
            _guard_trip(g, w)

        ns = {f"_E{k}": ex for k, ex in enumerate(consts)}
        ns.update({
            "_rpow": _rpow, "_tan": _tan, "_atan2": _atan2,
            "_sqrt": _sqrt, "_ln": _ln, "_exp": _exp, "_sin": math.sin,
            "_cos": math.cos, "_atan": math.atan, "_trip": _trip,
        })
        exec(compile(src, "<flatforge-compiled>", "exec"), ns)
        return ns["_f"], src

    def __call__(self, *args) -> tuple:
        try:
            return self._fn(*args)
        except ZeroDivisionError:
            raise DomainError("division by zero") from None
        except (ValueError, OverflowError) as err:
            raise DomainError(str(err)) from None

    def at(self, point: Mapping[VarId, float]) -> tuple:
        try:
            args = [point[v] for v in self.inputs]
        except KeyError as err:
            raise UnboundVariable(f"no value for {err.args[0]}") from None
        return self(*args)
