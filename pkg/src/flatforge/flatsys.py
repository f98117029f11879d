"""Control systems with a candidate (x,u)-flat output and their structural
analysis: time derivatives along the system, relative degrees, dimensions of
the codistribution sequence and the multi-index R."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import symexpr as sx
from .errors import (
    InconsistentR,
    NoRelativeDegree,
    RoundTripFailure,
    ValidationError,
)
from .symexpr import Domain, Expr, VarId

U1, U2 = sx.InputJet(1), sx.InputJet(2)


@dataclass(frozen=True)
class MultiIndex:
    a1: int
    a2: int

    def __iter__(self):
        yield self.a1
        yield self.a2

    def __getitem__(self, j: int) -> int:
        return (self.a1, self.a2)[j]

    def __len__(self):
        return 2

    @property
    def total(self) -> int:
        return self.a1 + self.a2

    def __add__(self, other):
        if isinstance(other, int):
            return MultiIndex(self.a1 + other, self.a2 + other)
        return MultiIndex(self.a1 + other[0], self.a2 + other[1])

    def __sub__(self, other):
        if isinstance(other, int):
            return MultiIndex(self.a1 - other, self.a2 - other)
        return MultiIndex(self.a1 - other[0], self.a2 - other[1])

    def __le__(self, other):
        return self.a1 <= other[0] and self.a2 <= other[1]

    def __lt__(self, other):
        return self <= other and tuple(self) != tuple(other)

    def __eq__(self, other):
        if isinstance(other, (MultiIndex, tuple, list)) and len(other) == 2:
            return (self.a1, self.a2) == tuple(other)
        return NotImplemented

    def __hash__(self):
        return hash((self.a1, self.a2))

    def __str__(self):
        return f"({self.a1},{self.a2})"


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """xdot = f(x, u) with exactly two inputs.

    ``inputs`` are the order-0 jet variables acting as inputs (u1, u2 for a
    system as given, ubar1, ubar2 after an input transformation).  ``derive``
    maps non-base jet variables to expressions in base coordinates; it is
    used to draw consistent sample points for transformed systems.
    """

    states: tuple
    inputs: tuple
    f: tuple
    params: Mapping[str, float] = field(default_factory=dict)
    dom: Domain = field(default_factory=Domain)
    names: Mapping[VarId, str] = field(default_factory=dict)
    derive: Callable | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def rates(self) -> dict:
        r = self._cache.get("rates")
        if r is None:
            r = self._cache["rates"] = dict(zip(self.states, self.f))
        return r

    @property
    def param_values(self) -> dict:
        return {sx.Param(k): float(v) for k, v in self.params.items()}

    def sampler(self, derive: Callable | None = None) -> "JetSampler":
        fns = [d for d in (derive, self.derive) if d is not None]
        return JetSampler(self.dom.with_fixed(self.param_values), fns)


class JetSampler:
    """Draws points in base coordinates (states, inputs, input jets) from a
    box and completes them with derived jet coordinates (new inputs, flat
    output derivatives, ...) evaluated at the same point."""

    def __init__(self, dom: Domain, derivers: Sequence[Callable] = ()):
        self.dom = dom
        self.derivers = list(derivers)

    def expr_for(self, v: VarId) -> Expr | None:
        for d in self.derivers:
            e = d(v)
            if e is not None:
                return e
        return None

    def sample(self, rng, variables):
        derived = {}
        base = set()
        for v in variables:
            e = self.expr_for(v)
            if e is None:
                base.add(v)
            else:
                derived[v] = e
        for e in derived.values():
            base |= e.free
        point = self.dom.sample(rng, base)
        if derived:
            keys = list(derived)
            vals = sx.evaluate_many([derived[k] for k in keys], point)
            point.update(zip(keys, vals))
        return point


def total_derivative(e: Expr, sys: ControlSystem) -> Expr:
    """Time derivative of ``e`` along the system, jets shifted on demand."""
    cache = sys._cache.setdefault("lie", {})
    hit = cache.get(e)
    if hit is not None:
        return hit
    rates = sys.rates
    terms = []
    for v in sorted(e.free):
        if v in rates:
            terms.append(sx.mul(rates[v], sx.differentiate(e, v)))
        elif v.is_jet:
            terms.append(sx.mul(sx.var(v.shifted()), sx.differentiate(e, v)))
        elif v.kind != sx.PARAM:
            raise ValueError(f"cannot differentiate along the system: unknown variable {v}")
    out = sx.add(*terms)
    cache[e] = out
    return out


def derivatives(e: Expr, sys: ControlSystem, order: int) -> list[Expr]:
    out = [e]
    for _ in range(order):
        out.append(total_derivative(out[-1], sys))
    return out


def output_derivatives(sys: ControlSystem, phi: Sequence[Expr], A) -> list[list[Expr]]:
    """[[phi1, phi1_1, .., phi1_a1], [phi2, .., phi2_a2]]."""
    return [derivatives(phi[j], sys, A[j]) for j in range(2)]


@dataclass(frozen=True)
class FlatSpec:
    phi: tuple
    Fx: tuple | None = None
    Fu: tuple | None = None
    R: MultiIndex | None = None


@dataclass
class FlatnessReport:
    K: MultiIndex
    R: MultiIndex
    dims: list
    lemma1_ok: bool
    lemma2_ok: bool
    static_feedback_linearizable: bool
    n: int

    @property
    def prolongations(self) -> int:
        return self.R.total - self.n

    def to_dict(self) -> dict:
        return {
            "K": list(self.K), "R": list(self.R), "dims": list(self.dims),
            "lemma1_ok": self.lemma1_ok, "lemma2_ok": self.lemma2_ok,
            "static_feedback_linearizable": self.static_feedback_linearizable,
            "prolongations": self.prolongations,
        }


# ---------------------------------------------------------------------------
# validation


def validate_system(sys: ControlSystem, rng=None) -> None:
    if len(sys.inputs) != 2:
        raise ValidationError(f"exactly 2 inputs required, got {len(sys.inputs)}")
    if len(sys.f) != sys.n:
        raise ValidationError("one dynamics expression per state required")
    allowed = set(sys.states) | set(sys.inputs) | set(sys.param_values)
    for i, fi in enumerate(sys.f):
        bad = fi.free - allowed
        if bad:
            raise ValidationError(
                f"dynamics of {sys.states[i]} may only use states, inputs and parameters; "
                f"found {', '.join(sorted(map(str, bad)))}"
            )
    r = sx.numeric_rank(sx.jacobian(list(sys.f), list(sys.inputs)), sys.sampler(), rng=rng)
    if r != 2:
        raise ValidationError(f"redundant inputs: generic rank of df/du is {r}, expected 2")


def validate_flatspec(sys: ControlSystem, spec: FlatSpec, rng=None) -> None:
    if len(spec.phi) != 2:
        raise ValidationError("flat output must have exactly two components")
    allowed = set(sys.states) | set(sys.inputs) | set(sys.param_values)
    for j, p in enumerate(spec.phi):
        bad = p.free - allowed
        if bad:
            raise ValidationError(
                f"flat output y{j + 1} may only use states, inputs and parameters; "
                f"found {', '.join(sorted(map(str, bad)))}"
            )
    cols = list(sys.states) + list(sys.inputs)
    r = sx.numeric_rank(sx.jacobian(list(spec.phi), cols), sys.sampler(), rng=rng)
    if r != 2:
        raise ValidationError("flat output components are not functionally independent")
    if spec.Fx is not None and len(spec.Fx) != sys.n:
        raise ValidationError(f"parameterization must define all {sys.n} states")
    if spec.Fu is not None and len(spec.Fu) != 2:
        raise ValidationError("parameterization must define both inputs")
    for F in (spec.Fx or ()) + (spec.Fu or ()):
        bad = {v for v in F.free if v.kind not in (sx.OUTPUT, sx.PARAM)}
        if bad:
            raise ValidationError(
                "parameterization may only use flat output jets y<j>_<a> and parameters"
            )


# ---------------------------------------------------------------------------
# analysis


def relative_degrees(sys: ControlSystem, phi: Sequence[Expr], rng=None) -> MultiIndex:
    """Smallest derivative order of each component that depends on an input."""
    rng = sx.make_rng(rng)
    dom = sys.sampler()
    ks = []
    for j in range(2):
        e = phi[j]
        for alpha in range(sys.n + 3):
            if any(not sx.is_zero(sx.differentiate(e, u), dom, rng=rng) for u in sys.inputs):
                ks.append(alpha)
                break
            e = total_derivative(e, sys)
        else:
            raise NoRelativeDegree(
                f"y{j + 1} does not depend on the inputs up to derivative order {sys.n + 2}"
            )
    return MultiIndex(*ks)


def _jet_columns(sys: ControlSystem, exprs) -> list[VarId]:
    base = list(sys.states) + list(sys.inputs)
    extra = sorted(v for v in sx.free_vars_all(exprs) if v not in set(base) and v.kind != sx.PARAM)
    return base + extra


def codistribution_dims(sys: ControlSystem, phi, K, beta_max: int, samples: int = 10,
                        rng=None) -> list[int]:
    """Dim of span{d phi_[K+b]} intersected with span{dx, du} for b = 0..beta_max."""
    rng = sx.make_rng(rng)
    dom = sys.sampler()
    n2 = sys.n + 2
    dims = []
    rows = output_derivatives(sys, phi, MultiIndex(*K) + beta_max)
    for beta in range(beta_max + 1):
        exprs = rows[0][: K[0] + beta + 1] + rows[1][: K[1] + beta + 1]
        cols = _jet_columns(sys, exprs)
        J = sx.jacobian(exprs, cols)
        unit = np.zeros((n2, len(cols)))
        unit[:, :n2] = np.eye(n2)
        rj = rs = 0
        for m in sx.sample_matrices(J, dom, samples, rng):
            rj = max(rj, sx.rank_of(m))
            rs = max(rs, sx.rank_of(np.vstack([m, unit])))
        dims.append(rj + n2 - rs)
    return dims


def check_lemma1(dims: Sequence[int]) -> bool:
    return all(b - a == 1 for a, b in zip(dims, dims[1:]))


def check_lemma2(sys: ControlSystem, phi, K, rng=None) -> bool:
    top = [derivatives(phi[j], sys, K[j])[-1] for j in range(2)]
    return sx.numeric_rank(sx.jacobian(top, list(sys.inputs)), sys.sampler(), rng=rng) == 1


def compute_R(sys: ControlSystem, phi, K, declared=None, rng=None):
    """R from r_j - k_j = n - #K, cross-checked against the codistribution
    sequence (it must reach n+2 exactly at beta = n - #K).  Returns (R, dims)."""
    K = MultiIndex(*K)
    p = sys.n - K.total
    if p < 0:
        raise InconsistentR(f"#K = {K.total} exceeds n = {sys.n}")
    R = K + p
    dims = codistribution_dims(sys, phi, K, p, rng=rng)
    if dims[0] != K.total + 2:
        raise InconsistentR(f"Dim B_K = {dims[0]}, expected #K+2 = {K.total + 2}")
    if dims[-1] != sys.n + 2 or (p > 0 and dims[-2] >= sys.n + 2):
        raise InconsistentR(
            f"codistribution dimensions {dims} do not reach n+2 = {sys.n + 2} exactly at "
            f"beta = {p}; the candidate is not a flat output on the sampled domain"
        )
    if declared is not None and MultiIndex(*declared) != R:
        raise InconsistentR(f"declared R = {MultiIndex(*declared)} but computed R = {R}")
    return R, dims


def analyze(sys: ControlSystem, spec: FlatSpec, rng=None) -> FlatnessReport:
    rng = sx.make_rng(rng)
    K = relative_degrees(sys, spec.phi, rng)
    R, dims = compute_R(sys, spec.phi, K, spec.R, rng)
    lemma2 = check_lemma2(sys, spec.phi, K, rng) if R != K else False
    return FlatnessReport(
        K=K, R=R, dims=dims, lemma1_ok=check_lemma1(dims), lemma2_ok=lemma2,
        static_feedback_linearizable=(R == K), n=sys.n,
    )


# ---------------------------------------------------------------------------
# parameterization


def output_jet_deriver(sys: ControlSystem, phi) -> Callable:
    """Maps y<j>_<a> (and yd<j>_<a>) to the a-th derivative of phi_j."""
    cache: dict = {}

    def derive(v: VarId):
        if v.kind not in (sx.OUTPUT, sx.REF):
            return None
        key = (v.index, v.order)
        if key not in cache:
            cache[key] = derivatives(phi[v.index - 1], sys, v.order)[-1]
        return cache[key]

    return derive


@dataclass
class ParameterizationReport:
    trials: int
    max_x_residual: float
    max_u_residual: float
    ok: bool


def verify_parameterization(sys: ControlSystem, spec: FlatSpec, trials: int = 100,
                            tol: float = 1e-9, rng=None) -> ParameterizationReport:
    """Round trip x, u -> y_[R] -> (F_x, F_u) at random points."""
    if spec.Fx is None or spec.Fu is None:
        raise ValidationError("no parameterization supplied")
    rng = sx.make_rng(rng)
    Fs = list(spec.Fx) + list(spec.Fu)
    jets = sorted(v for v in sx.free_vars_all(Fs) if v.kind == sx.OUTPUT)
    derive = output_jet_deriver(sys, spec.phi)
    targets = list(sys.states) + list(sys.inputs)
    dom = sys.sampler()
    worst = [0.0, 0.0, None, 0.0]
    n = sys.n

    def one(point):
        ys = sx.evaluate_many([derive(v) for v in jets], point)
        ypoint = dict(zip(jets, ys))
        ypoint.update(sys.param_values)
        vals = sx.evaluate_many(Fs, ypoint)
        truth = [point[v] for v in targets]
        rx = max(abs(a - b) for a, b in zip(vals[:n], truth[:n])) / (1 + max(map(abs, truth[:n])))
        ru = max(abs(a - b) for a, b in zip(vals[n:], truth[n:])) / (1 + max(map(abs, truth[n:])))
        worst[0] = max(worst[0], rx)
        worst[1] = max(worst[1], ru)
        if max(rx, ru) > worst[3]:
            worst[3] = max(rx, ru)
            worst[2] = {str(k): v for k, v in point.items() if k in set(targets)}
        return False

    # sample the base coordinates that the output jets need
    needed = set(targets) | sx.free_vars_all([derive(v) for v in jets])
    sx.numeric._draw([sx.var(v) for v in needed], dom, rng, trials, one)
    ok = worst[0] < tol and worst[1] < tol
    report = ParameterizationReport(trials, worst[0], worst[1], ok)
    if not ok:
        raise RoundTripFailure(
            f"parameterization round trip residual x: {worst[0]:.3e}, u: {worst[1]:.3e} "
            f"(tolerance {tol:g}); worst point {worst[2]}",
            worst[2],
        )
    return report

