"""Quasi-static tracking law u = alpha(x, yd_[R]).

The linear target dynamics are imposed on v = y_kappa; the time
derivatives of v that the parameterization needs are eliminated by a
triangular substitution done once at synthesis time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import symexpr as sx
from .brunovsky import BrunovskyState
from .errors import CountMismatch, MissingParameterization, StructureViolation
from .flatsys import MultiIndex

DEFAULT_GUARD = 1e-9


@dataclass(frozen=True)
class GainSet:
    """a[j][b] multiplies e^{j+1}_b; poles[j] are the roots used to build them."""

    a: tuple
    poles: tuple = ((), ())

    def polynomial(self, j: int) -> np.ndarray:
        """Monic coefficients, highest power first."""
        return np.array([1.0] + [float(c) for c in reversed(self.a[j - 1])])


def place_poles(kappa, poles: Sequence[Sequence[float]]) -> GainSet:
    a, ps = [], []
    for j in range(2):
        pj = [float(p) for p in poles[j]]
        if len(pj) != kappa[j]:
            raise CountMismatch(f"channel {j + 1} needs {kappa[j]} poles, got {len(pj)}")
        if not all(np.isfinite(pj)):
            raise CountMismatch(f"channel {j + 1} poles must be finite")
        coeffs = np.poly(pj) if pj else np.array([1.0])
        a.append(tuple(float(c) for c in reversed(coeffs[1:])))
        ps.append(tuple(pj))
    return GainSet(tuple(a), tuple(ps))


def default_poles(kappa, pole: float = -2.0) -> list:
    return [[pole] * kappa[0], [pole] * kappa[1]]


@dataclass
class VChain:
    """Triangular equations v^j_l = rhs, in solve order."""

    unknowns: list     # VarIds v<j>_<l>
    equations: list    # right-hand sides referencing earlier unknowns
    solved: list       # right-hand sides over (x, parameters, yd-jets) only

    def solution(self) -> dict:
        return dict(zip(self.unknowns, self.solved))


def _gain(c: float) -> sx.Expr:
    return sx.const(c)


def build_v_chain(b: BrunovskyState, gains: GainSet, placeholders: bool = False) -> VChain:
    """Differentiated target dynamics with y_[kappa-1] taken from the v-form
    (or kept as output-jet placeholders) and y_[kappa, R] replaced by v-jets."""
    kappa, R = b.kappa, b.R
    order = (b.lead, 3 - b.lead)
    unknowns, eqs = [], []

    def Y(j, m):
        if m < kappa[j - 1]:
            return sx.var(sx.OutputJet(j, m)) if placeholders else b.component(j, m)
        return sx.var(sx.NewInputJet(j, m - kappa[j - 1]))

    for j in order:
        a = gains.a[j - 1]
        for lam in range(R[j - 1] - kappa[j - 1] + 1):
            terms = [sx.var(sx.RefJet(j, kappa[j - 1] + lam))]
            for beta, ab in enumerate(a):
                if ab == 0:
                    continue
                err = sx.sub(Y(j, beta + lam), sx.var(sx.RefJet(j, beta + lam)))
                terms.append(sx.neg(sx.mul(_gain(ab), err)))
            unknowns.append(sx.NewInputJet(j, lam))
            eqs.append(sx.add(*terms))

    solved, known = [], {}
    for v, e in zip(unknowns, eqs):
        s = sx.substitute(e, known)
        known[v] = s
        solved.append(s)
    return VChain(unknowns, eqs, solved)


def check_triangular(chain: VChain) -> bool:
    """Every equation refers only to unknowns solved before it."""
    seen = set()
    for v, e in zip(chain.unknowns, chain.equations):
        if any(w.kind == sx.NEWINPUT and w not in seen for w in e.free):
            return False
        seen.add(v)
    return True


def zero_error_check(b: BrunovskyState, gains: GainSet) -> bool:
    """With e == 0 the chain must return v^j_l = yd^j_{kappa_j + l} exactly."""
    ch = build_v_chain(b, gains, placeholders=True)
    binds = {}
    for j in (1, 2):
        for m in range(b.kappa[j - 1] + 1 + b.R[j - 1]):
            binds[sx.OutputJet(j, m)] = sx.var(sx.RefJet(j, m))
    for v, s in zip(ch.unknowns, ch.solved):
        if sx.substitute(s, binds) is not sx.var(sx.RefJet(v.index, b.kappa[v.index - 1] + v.order)):
            return False
    return True


@dataclass
class Controller:
    gains: GainSet
    kappa: MultiIndex
    R: MultiIndex
    lead: int
    states: tuple
    params: dict
    vchain: VChain
    Fu: tuple
    law: tuple
    guard: float = DEFAULT_GUARD
    refs: tuple = ()
    _fn: object = field(default=None, repr=False)

    def __post_init__(self):
        self.refs = tuple(sx.RefJet(j, a) for j in (1, 2) for a in range(self.R[j - 1] + 1))
        fixed = {sx.Param(k): float(v) for k, v in self.params.items()}
        self._fn = sx.Compiled(self.law, list(self.states) + list(self.refs), fixed, self.guard)

    def __call__(self, x: Sequence[float], ref) -> tuple:
        return self._fn(*x, *ref.flat(self.R))


def law_substitution(b: BrunovskyState) -> dict:
    """y^j_a -> v-form component (a < kappa_j) or v^j_{a - kappa_j}."""
    binds = {}
    for j in (1, 2):
        for a in range(b.R[j - 1] + 1):
            y = sx.OutputJet(j, a)
            if a < b.kappa[j - 1]:
                binds[y] = b.component(j, a)
            else:
                binds[y] = sx.var(sx.NewInputJet(j, a - b.kappa[j - 1]))
    return binds


def assemble_law(Fu, vform_binds: dict, chain: VChain) -> tuple:
    staged = [sx.substitute(f, vform_binds) for f in Fu]
    return tuple(sx.substitute(f, chain.solution()) for f in staged)


def synthesize(Fu, b: BrunovskyState, gains: GainSet, params=None,
               guard: float = DEFAULT_GUARD) -> Controller:
    if Fu is None:
        raise MissingParameterization("the tracking law needs the input parameterization F_u")
    chain = build_v_chain(b, gains)
    law = assemble_law(Fu, law_substitution(b), chain)
    params = dict(params or {})
    allowed = set(b.states) | {sx.Param(k) for k in params}
    bad = {v for v in sx.free_vars_all(law) if v not in allowed and v.kind != sx.REF}
    if bad:
        raise StructureViolation(
            "control law still depends on " + ", ".join(sorted(map(str, bad)))
        )
    return Controller(gains, b.kappa, b.R, b.lead, tuple(b.states), params, chain,
                      tuple(Fu), law, guard)


@dataclass
class RefBundle:
    """yd^j_a for j = 1, 2 and a = 0..r_j at one instant."""

    y1: tuple
    y2: tuple

    def flat(self, R) -> list:
        return list(self.y1[: R[0] + 1]) + list(self.y2[: R[1] + 1])

    def point(self) -> dict:
        out = {sx.RefJet(1, a): v for a, v in enumerate(self.y1)}
        out.update({sx.RefJet(2, a): v for a, v in enumerate(self.y2)})
        return out


def eval_control(ctrl: Controller, x: Sequence[float], ref: RefBundle) -> tuple:
    """u = alpha(x, yd_[R]).  Raises SingularityEncountered on a guard trip."""
    for j, ys in ((1, ref.y1), (2, ref.y2)):
        if len(ys) < ctrl.R[j - 1] + 1:
            raise CountMismatch(f"reference channel {j} needs derivatives up to order {ctrl.R[j - 1]}")
    return ctrl(x, ref)


def eval_vchain(ctrl: Controller, x: Sequence[float], ref: RefBundle) -> dict:
    point = dict(zip(ctrl.states, x))
    point.update(ref.point())
    point.update({sx.Param(k): float(v) for k, v in ctrl.params.items()})
    vals = sx.evaluate_many(ctrl.vchain.solved, point)
    return dict(zip(ctrl.vchain.unknowns, vals))
