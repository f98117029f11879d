"""Input transformation with a flat-output derivative as new input, the
triangular structure of the transformed output chain, prolongation of the
new input and the static feedback linearizability check."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import symexpr as sx
from .errors import (
    NewtonDivergence,
    RankDeficient,
    SingularFeedback,
    StructureViolation,
    SymbolicUnavailable,
)
from .flatsys import U1, U2, ControlSystem, MultiIndex, derivatives, total_derivative
from .symexpr import Expr

INPUTS = (U1, U2)
UB1, UB2 = sx.UbarJet(1), sx.UbarJet(2)

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


@dataclass
class StaticFeedback:
    """ubar = forward(x, u) and, when available in closed form, u = inverse(x, ubar).

    ``lead`` is the flat-output component whose derivative becomes ubar1,
    ``complement`` the index l of the input kept as ubar2 = u^l.
    """

    forward: tuple
    inverse: tuple | None
    lead: int
    complement: int
    method: str
    scores: dict = field(default_factory=dict)
    sys: ControlSystem | None = field(default=None, repr=False)

    @property
    def other(self) -> int:
        return 3 - self.lead

    def describe(self) -> str:
        return f"ubar2 = u{self.complement} (inverse: {self.method})"

    def deriver(self):
        """Maps ubar<j>_<a> to its expression in (x, u, u-jets)."""
        cache: dict = {}
        sys = self.sys

        def derive(v):
            if v.kind != sx.UBAR:
                return None
            key = (v.index, v.order)
            if key not in cache:
                cache[key] = derivatives(self.forward[v.index - 1], sys, v.order)[-1]
            return cache[key]

        return derive

    def solve(self, x: dict, ubar: tuple, guess=(1.0, 1.0)) -> tuple:
        """Pointwise inverse by damped Newton iteration."""
        point = dict(x)
        point.update(self.sys.param_values)
        jac = sx.jacobian(list(self.forward), list(INPUTS))
        u = np.array(guess, dtype=float)
        target = np.array(ubar, dtype=float)

        def resid(uv):
            point[U1], point[U2] = uv
            return np.array(sx.evaluate_many(self.forward, point)) - target

        r = resid(u)
        for _ in range(NEWTON_MAXIT):
            if np.max(np.abs(r)) < NEWTON_TOL * (1 + np.max(np.abs(target))):
                return float(u[0]), float(u[1])
            point[U1], point[U2] = u
            J = sx.evaluate_matrix(jac, point)
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                raise NewtonDivergence("singular Jacobian in the inverse feedback") from None
            lam = 1.0
            while lam > 1e-4:
                try:
                    cand = u - lam * step
                    rc = resid(cand)
                except sx.DomainError:
                    rc = None
                if rc is not None and np.linalg.norm(rc) < np.linalg.norm(r):
                    u, r = cand, rc
                    break
                lam /= 2
            else:
                break
        raise NewtonDivergence(
            f"inverse feedback did not converge within {NEWTON_MAXIT} iterations "
            f"(residual {np.max(np.abs(r)):.3e})"
        )


def _sigma_min_score(forward, sampler, rng, samples=20):
    jac = sx.jacobian(list(forward), list(INPUTS))
    mats = sx.sample_matrices(jac, sampler, samples, rng)
    rank = max(sx.rank_of(m) for m in mats)
    return rank, min(float(np.linalg.svd(m, compute_uv=False)[-1]) for m in mats)


def _affine_solve(e: Expr, target: Expr, unknown, dom, rng):
    """Solve e = target for ``unknown`` when e is affine in it."""
    d = sx.differentiate(e, unknown)
    if d is sx.ZERO or not sx.is_zero(sx.differentiate(d, unknown), dom, rng=rng):
        return None
    rest = sx.substitute(e, {unknown: sx.ZERO})
    return sx.div(sx.sub(target, rest), d)


def _isolate(e: Expr, target: Expr, unknown):
    """Solve e = target for ``unknown`` occurring along a single path of e
    (principal branches); None when the path meets a non-invertible node."""
    while True:
        if e.op == "var":
            return target if e.args[0] == unknown else None
        hits = [i for i, c in enumerate(e.args) if isinstance(c, Expr) and unknown in c.free]
        if len(hits) != 1:
            return None
        i = hits[0]
        op, a = e.op, e.args
        rest = [c for k, c in enumerate(a) if k != i]
        if op == "add":
            target = sx.sub(target, sx.add(*rest))
        elif op == "neg":
            target = sx.neg(target)
        elif op == "mul":
            target = sx.div(target, sx.mul(*rest))
        elif op == "div":
            target = sx.mul(target, a[1]) if i == 0 else sx.div(a[0], target)
        elif op == "pow":
            target = sx.pow_(target, 1 / a[1])
        elif op == "sqrt":
            target = sx.pow_(target, 2)
        elif op == "exp":
            target = sx.ln(target)
        elif op == "ln":
            target = sx.exp(target)
        elif op == "atan":
            target = sx.tan(target)
        elif op == "tan":
            target = sx.atan(target)
        else:
            return None
        e = a[i]


def _invert(phi_k: Expr, m: int, l: int, dom, rng):
    """u^m from ubar1 = phi_k(x, u) with u^l = ubar2."""
    um = INPUTS[m - 1]
    e = sx.substitute(phi_k, {INPUTS[l - 1]: sx.var(UB2)})
    sol = _affine_solve(e, sx.var(UB1), um, dom, rng)
    if sol is not None:
        return sol, "affine"
    sol = _isolate(e, sx.var(UB1), um)
    if sol is not None:
        return sol, "isolated"
    return None, "newton"


def build_feedback(sys: ControlSystem, phi, K, lead: int = 1, complement: int | None = None,
                   rng=None) -> StaticFeedback:
    """ubar1 = phi^lead_{k_lead}(x, u), ubar2 = u^l.

    The complement l maximizes the smallest singular value of the input
    Jacobian over samples unless pinned by ``complement``.
    """
    rng = sx.make_rng(rng)
    K = MultiIndex(*K)
    phi_k = derivatives(phi[lead - 1], sys, K[lead - 1])[-1]
    sampler = sys.sampler()
    scores = {}
    for l in (1, 2):
        rank, s = _sigma_min_score((phi_k, sx.var(INPUTS[l - 1])), sampler, rng)
        scores[l] = s if rank == 2 else 0.0
    if complement is not None:
        if scores[complement] == 0.0:
            raise SingularFeedback(f"complement u{complement} gives a singular input transformation")
        l = complement
    else:
        l = max((1, 2), key=lambda j: (scores[j], j))
        if scores[l] == 0.0:
            raise SingularFeedback("no complement choice gives a regular input transformation")
    m = 3 - l
    fb = StaticFeedback((phi_k, sx.var(INPUTS[l - 1])), None, lead, l, "newton", scores, sys)
    sol, method = _invert(phi_k, m, l, sys.sampler(fb.deriver()), rng)
    if sol is not None:
        inv = [None, None]
        inv[m - 1] = sol
        inv[l - 1] = sx.var(UB2)
        fb.inverse = tuple(inv)
        fb.method = method
        try:
            ok = check_inverse(fb, trials=20, rng=rng) < 1e-9
        except (sx.DomainError, sx.InconclusiveDomain):
            ok = False
        if not ok:  # wrong branch on the domain
            fb.inverse, fb.method = None, "newton"
    return fb


def build_feedback_alt(sys: ControlSystem, phi, K, complement: int | None = None,
                       rng=None) -> StaticFeedback:
    """Variant with the derivative of the second component as new input."""
    return build_feedback(sys, phi, K, lead=2, complement=complement, rng=rng)


def check_inverse(fb: StaticFeedback, trials: int = 100, tol: float = 1e-9, rng=None) -> float:
    """Largest |forward(x, inverse(x, ubar)) - ubar| at samples (relative)."""
    rng = sx.make_rng(rng)
    if fb.inverse is None:
        raise SymbolicUnavailable("inverse feedback is implicit")
    comp = [sx.substitute(f, {U1: fb.inverse[0], U2: fb.inverse[1]}) for f in fb.forward]
    dom = fb.sys.sampler(fb.deriver())
    worst = [0.0]

    def one(point):
        vals = sx.evaluate_many(comp, point)
        for c, j in zip(vals, (UB1, UB2)):
            worst[0] = max(worst[0], abs(c - point[j]) / (1 + abs(point[j])))
        return False

    sx.numeric._draw(comp + [sx.var(UB1), sx.var(UB2)], dom, rng, trials, one)
    return worst[0]


def transform_system(sys: ControlSystem, fb: StaticFeedback):
    """The system in (x, ubar).  Implicit inverses give an evaluable vector field."""
    if fb.inverse is None:
        return ImplicitSystem(sys, fb)
    binds = {U1: fb.inverse[0], U2: fb.inverse[1]}
    fbar = tuple(sx.substitute(fi, binds) for fi in sys.f)
    return ControlSystem(
        sys.states, (UB1, UB2), fbar, sys.params, sys.dom, sys.names, derive=fb.deriver(),
    )


class ImplicitSystem:
    """xdot = f(x, u(x, ubar)) with u obtained by Newton iteration."""

    def __init__(self, sys: ControlSystem, fb: StaticFeedback):
        self.sys = sys
        self.fb = fb
        self._f = sx.Compiled(sys.f, list(sys.states) + list(INPUTS), sys.param_values)

    def rhs(self, x, ubar, guess=(1.0, 1.0)):
        xd = dict(zip(self.sys.states, x))
        u = self.fb.solve(xd, ubar, guess)
        return np.array(self._f(*x, *u))


# ---------------------------------------------------------------------------
# triangular chain


@dataclass
class TransformedChain:
    sysbar: ControlSystem
    fb: StaticFeedback
    K: MultiIndex
    R: MultiIndex
    rows: list   # rows[j][a] = y^{j+1}_a in (x, ubar1-jets, ubar2)
    p: int

    @property
    def lead(self) -> int:
        return self.fb.lead

    @property
    def other(self) -> int:
        return self.fb.other

    def flat(self) -> list:
        return self.rows[0] + self.rows[1]


def drop_vars(e: Expr, vs, dom, rng) -> Expr:
    """Remove variables the expression does not depend on (certified
    beforehand) by pinning them to a constant at which it stays defined."""
    vs = [v for v in vs if v in e.free]
    if not vs:
        return e
    for c in (0, 1, Fraction(1, 2)):
        cand = sx.substitute(e, {v: sx.const(c) for v in vs})
        try:
            if sx.is_zero(sx.sub(cand, e), dom, trials=5, rng=rng):
                return cand
        except (sx.DomainError, sx.InconclusiveDomain):
            continue
    return e


def _depends(e: Expr, vs, dom, rng) -> bool:
    return any(not sx.is_zero(sx.differentiate(e, v), dom, rng=rng) for v in vs if v in e.free)


def transformed_chain(sysbar: ControlSystem, phi, fb: StaticFeedback, K, R,
                      rng=None) -> TransformedChain:
    """y_[R] in the transformed coordinates with the triangular layout
    verified: the lead chain is ubar1 and its derivatives, the other chain is
    free of ubar2 up to its last line, and the full map is a diffeomorphism."""
    if not isinstance(sysbar, ControlSystem):
        raise SymbolicUnavailable("transformed system has no symbolic form (implicit inverse)")
    rng = sx.make_rng(rng)
    K, R = MultiIndex(*K), MultiIndex(*R)
    dom = sysbar.sampler()
    li, oi = fb.lead - 1, fb.other - 1
    binds = {U1: fb.inverse[0], U2: fb.inverse[1]}
    phibar = [sx.substitute(p, binds) for p in phi]
    p = R.total - sysbar.n
    rows: list = [None, None]

    lead = derivatives(phibar[li], sysbar, K[li])
    top = lead[-1]
    if not sx.is_zero(sx.sub(top, sx.var(UB1)), dom, rng=rng):
        raise StructureViolation(f"y{fb.lead}_{K[li]} does not equal ubar1 after the transformation")
    for a, e in enumerate(lead[:-1]):
        jets = [v for v in e.free if v.is_jet]
        if _depends(e, jets, dom, rng):
            raise StructureViolation(f"y{fb.lead}_{a} depends on the inputs")
        lead[a] = drop_vars(e, jets, dom, rng)
    rows[li] = lead[:-1] + [sx.var(sx.UbarJet(1, b)) for b in range(R[li] - K[li] + 1)]

    other = [phibar[oi]]
    for a in range(R[oi] + 1):
        e = other[a]
        ub2 = [v for v in e.free if v.kind == sx.UBAR and v.index == 2]
        if a < R[oi]:
            if _depends(e, ub2, dom, rng):
                raise StructureViolation(
                    f"ubar2 occurs in y{fb.other}_{a} before the last line "
                    f"(order {R[oi]}); the candidate is not an (x,u)-flat output here"
                )
            e = drop_vars(e, ub2, dom, rng)
            if a < K[oi]:
                ub1 = [v for v in e.free if v.kind == sx.UBAR]
                if _depends(e, ub1, dom, rng):
                    raise StructureViolation(
                        f"y{fb.other}_{a} depends on the inputs below its relative degree"
                    )
                e = drop_vars(e, ub1, dom, rng)
            other[a] = e
            other.append(total_derivative(e, sysbar))
        elif not _depends(e, ub2, dom, rng):
            raise StructureViolation(f"ubar2 does not occur in the last line y{fb.other}_{a}")
        else:
            other[a] = drop_vars(e, [v for v in ub2 if v.order > 0], dom, rng)
    rows[oi] = other

    chain = TransformedChain(sysbar, fb, K, R, rows, p)
    cols = list(sysbar.states) + [sx.UbarJet(1, b) for b in range(R[li] - K[li] + 1)] + [UB2]
    extra = sx.free_vars_all(chain.flat()) - set(cols) - set(sysbar.param_values)
    if extra:
        raise StructureViolation(
            "unexpected variables in the output chain: " + ", ".join(sorted(map(str, extra)))
        )
    r = sx.numeric_rank(sx.jacobian(chain.flat(), cols), dom, rng=rng)
    if r != len(cols):
        raise RankDeficient(f"Jacobian of y_[R] has rank {r}, expected {len(cols)}")
    return chain


# ---------------------------------------------------------------------------
# prolongation


def prolong(sysbar: ControlSystem, p: int) -> ControlSystem:
    """Integrator chain ubar1 -> ubar1_1 -> ... -> ubar1_{p-1}, new inputs
    (ubar1_p, ubar2)."""
    if p < 0:
        raise ValueError("number of prolongations must be non-negative")
    if p == 0:
        return sysbar
    chain = [sx.UbarJet(1, a) for a in range(p)]
    return ControlSystem(
        tuple(sysbar.states) + tuple(chain),
        (sx.UbarJet(1, p), UB2),
        tuple(sysbar.f) + tuple(sx.var(v.shifted()) for v in chain),
        sysbar.params, sysbar.dom, sysbar.names, derive=sysbar.derive,
    )


def output_chain(sysx: ControlSystem, phibar, R, rng=None) -> list:
    """y_[R] along ``sysx``; variables outside (state, input, parameters) that
    an entry provably does not depend on are removed before differentiating on."""
    rng = sx.make_rng(rng)
    dom = sysx.sampler()
    allowed = set(sysx.states) | set(sysx.inputs) | set(sysx.param_values)
    out = []
    for j in range(2):
        e = phibar[j]
        for a in range(R[j] + 1):
            spurious = [v for v in e.free - allowed
                        if sx.is_zero(sx.differentiate(e, v), dom, rng=rng)]
            e = drop_vars(e, spurious, dom, rng)
            out.append(e)
            if a < R[j]:
                e = total_derivative(e, sysx)
    return out


def check_sfl(prolonged: ControlSystem, phibar, R, rng=None) -> bool:
    """True iff y_[R] is a diffeomorphism of (extended state, inputs)."""
    rng = sx.make_rng(rng)
    ys = output_chain(prolonged, phibar, R, rng)
    cols = list(prolonged.states) + list(prolonged.inputs)
    if sx.free_vars_all(ys) - set(cols) - set(prolonged.param_values):
        return False
    if len(ys) != len(cols):
        return False
    return sx.numeric_rank(sx.jacobian(ys, cols), prolonged.sampler(), rng=rng) == len(cols)


def phibar_of(phi, fb: StaticFeedback) -> list:
    binds = {U1: fb.inverse[0], U2: fb.inverse[1]}
    return [sx.substitute(p, binds) for p in phi]
