"""Reference trajectories with exact derivatives, fixed-step RK4 closed-loop
simulation and the comparison of the simulated tracking error with the
analytic solution of the linear error dynamics."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np

from . import symexpr as sx
from .errors import CheckFailed, SingularityEncountered, UnsupportedAtom, ValidationError
from .flatsys import ControlSystem
from .tracking import Controller, RefBundle

# ---------------------------------------------------------------------------
# references


class Atom:
    def derivative(self, t: float, order: int) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Poly(Atom):
    """c0 + c1 t + c2 t^2 + ..."""

    coeffs: tuple

    def derivative(self, t, order):
        s = 0.0
        for k in range(len(self.coeffs) - 1, order - 1, -1):
            s = s * t + self.coeffs[k] * factorial(k) / factorial(k - order)
        return s


@dataclass(frozen=True)
class Sine(Atom):
    """A sin(w t + phi) + c"""

    A: float
    w: float = 1.0
    phi: float = 0.0
    c: float = 0.0

    def derivative(self, t, order):
        val = self.A * self.w ** order * math.sin(self.w * t + self.phi + order * math.pi / 2)
        return val + self.c if order == 0 else val


@dataclass(frozen=True)
class Const(Atom):
    c: float

    def derivative(self, t, order):
        return self.c if order == 0 else 0.0


@dataclass(frozen=True)
class Reference:
    channels: tuple   # per channel: tuple of atoms, summed

    def derivs(self, j: int, t: float, order: int) -> list:
        return [sum(a.derivative(t, k) for a in self.channels[j - 1]) for k in range(order + 1)]

    def bundle(self, t: float, R) -> RefBundle:
        return RefBundle(tuple(self.derivs(1, t, R[0])), tuple(self.derivs(2, t, R[1])))


_ATOM = re.compile(r"^\s*([a-z]+)\s*\(([^()]*)\)\s*$")


def make_atom(text: str) -> Atom:
    m = _ATOM.match(text)
    if not m:
        raise UnsupportedAtom(f"cannot parse reference atom {text!r}")
    name, body = m.group(1), m.group(2)
    try:
        args = [float(a) for a in body.split(",")] if body.strip() else []
    except ValueError:
        raise UnsupportedAtom(f"non-numeric argument in {text!r}") from None
    if not all(math.isfinite(a) for a in args):
        raise UnsupportedAtom(f"non-finite argument in {text!r}")
    if name == "poly" and args:
        return Poly(tuple(args))
    if name == "sin" and 1 <= len(args) <= 4:
        return Sine(*args)
    if name == "const" and len(args) == 1:
        return Const(args[0])
    raise UnsupportedAtom(f"unsupported reference atom {text!r} (use poly, sin or const)")


def make_reference(spec) -> Reference:
    """``spec`` is a pair of channel strings (atoms joined by '+') or a single
    string with the channels separated by ';', e.g. "sin(0.2,1,0,1); poly(0,1)"."""
    if isinstance(spec, str):
        spec = spec.split(";")
    if len(spec) != 2:
        raise UnsupportedAtom("reference needs exactly two channels")
    chans = []
    for ch in spec:
        if isinstance(ch, str):
            parts = [p for p in re.split(r"\+(?![^()]*\))", ch) if p.strip()]
            chans.append(tuple(make_atom(p) for p in parts))
        else:
            chans.append(tuple(ch))
        if not chans[-1]:
            raise UnsupportedAtom("empty reference channel")
    return Reference(tuple(chans))


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    tf: float = 5.0
    dt: float = 1e-3
    x0: tuple = ()
    guard: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.tf > self.t0:
            raise ValidationError("tf must exceed t0")
        if (self.tf - self.t0) / self.dt > 1e7:
            raise ValidationError("more than 1e7 steps requested")

    @property
    def steps(self) -> int:
        return int(math.floor((self.tf - self.t0) / self.dt + 1e-9))


@dataclass
class SimResult:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    yd: np.ndarray
    e: np.ndarray
    truncated: bool = False
    reason: str = ""
    x0: tuple = ()
    t0: float = 0.0

    @property
    def rows(self) -> int:
        return len(self.t)

    def max_error(self, j: int | None = None) -> float:
        e = self.e if j is None else self.e[:, j - 1]
        return float(np.max(np.abs(e)))


@dataclass
class Plant:
    """Compiled right-hand side and flat output of a system."""

    sys: ControlSystem
    phi: tuple
    f: object = field(init=False)
    y: object = field(init=False)

    def __post_init__(self):
        cols = list(self.sys.states) + list(self.sys.inputs)
        fixed = self.sys.param_values
        self.f = sx.Compiled(self.sys.f, cols, fixed)
        self.y = sx.Compiled(self.phi, cols, fixed)


def simulate(sys: ControlSystem, phi, ctrl: Controller, ref: Reference, cfg: SimConfig,
             plant: Plant | None = None) -> SimResult:
    """Classical RK4 with the control law re-evaluated at every stage."""
    plant = plant or Plant(sys, tuple(phi))
    f, law, R = plant.f._fn, ctrl._fn, ctrl.R
    n = sys.n
    h = cfg.dt
    N = cfg.steps
    x = np.array(cfg.x0, dtype=float)
    if x.shape != (n,):
        raise ValidationError(f"x0 must have {n} entries")
    d1, d2 = ref.channels

    def refv(t):
        return ([sum(a.derivative(t, k) for a in d1) for k in range(R[0] + 1)]
                + [sum(a.derivative(t, k) for a in d2) for k in range(R[1] + 1)])

    def rhs(t, xs):
        u = law(*xs, *refv(t))
        return np.array(f(*xs, *u)), u

    ts, xs, us = [], [], []
    truncated, reason = False, ""
    t = cfg.t0
    try:
        for k in range(N + 1):
            t = cfg.t0 + k * h
            k1, u = rhs(t, x)
            ts.append(t)
            xs.append(x.copy())
            us.append(u)
            if k == N:
                break
            k2, _ = rhs(t + h / 2, x + h / 2 * k1)
            k3, _ = rhs(t + h / 2, x + h / 2 * k2)
            k4, _ = rhs(t + h, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise sx.DomainError("state left the finite range")
    except (SingularityEncountered, sx.DomainError, ZeroDivisionError, OverflowError) as err:
        truncated, reason = True, f"{type(err).__name__} at t={t:.6g}: {err}"
    T = np.array(ts)
    X = np.array(xs).reshape(len(ts), n)
    U = np.array(us, dtype=float).reshape(len(ts), 2)
    Y = np.array([plant.y(*xx, *uu) for xx, uu in zip(X, U)]).reshape(len(ts), 2)
    YD = np.array([[ref.derivs(1, tt, 0)[0], ref.derivs(2, tt, 0)[0]] for tt in T]).reshape(len(ts), 2)
    return SimResult(T, X, U, Y, YD, Y - YD, truncated, reason, tuple(cfg.x0), cfg.t0)


def write_csv(result: SimResult, path_or_file) -> None:
    n = result.x.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["u1", "u2", "y1", "y2", "yd1", "yd2", "e1", "e2"]
    data = np.column_stack([result.t, result.x, result.u, result.y, result.yd, result.e])
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", encoding="utf-8", newline="") if own else path_or_file
    try:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    finally:
        if own:
            fh.close()


def on_reference_state(Fx, params: dict, ref: Reference, t0: float, R) -> list:
    """x0 = F_x(yd_[R-1](t0)): the state at which the tracking error vanishes."""
    point = {sx.Param(k): float(v) for k, v in params.items()}
    for j in (1, 2):
        for a, val in enumerate(ref.derivs(j, t0, R[j - 1])):
            point[sx.OutputJet(j, a)] = val
    return sx.evaluate_many(list(Fx), point)


# ---------------------------------------------------------------------------
# error dynamics


def _cluster(poles: Sequence[float], tol: float = 1e-6) -> list:
    out: list = []
    for p in sorted(poles):
        if out and abs(p - out[-1][0]) <= tol * max(1.0, abs(p)):
            out[-1][1] += 1
        else:
            out.append([p, 1])
    return out


def modal_solution(poles: Sequence[float], e0: Sequence[float], t: np.ndarray) -> np.ndarray:
    """Solution of prod(d/dt - p_i) e = 0 with e^(b)(0) = e0[b], repeated
    poles contributing t^m exp(p t) modes."""
    kappa = len(poles)
    if kappa == 0:
        return np.zeros_like(t)
    modes = [(p, m) for p, mult in _cluster(poles) for m in range(mult)]
    M = np.zeros((kappa, kappa))
    for col, (p, m) in enumerate(modes):
        for b in range(kappa):
            if b >= m:
                M[b, col] = factorial(b) / factorial(b - m) * p ** (b - m)
    c = np.linalg.solve(M, np.asarray(e0, dtype=float))
    out = np.zeros_like(t, dtype=float)
    for ci, (p, m) in zip(c, modes):
        out += ci * t ** m * np.exp(p * t)
    return out


@dataclass
class ErrorCheck:
    deviation: tuple        # per channel: relative deviation (kappa_j > 0) or max |e| (kappa_j = 0)
    worst_time: tuple
    e0: tuple
    passed: bool

    def lines(self) -> list:
        out = []
        for j in (1, 2):
            out.append(f"channel {j}: deviation {self.deviation[j - 1]:.3e} at t={self.worst_time[j - 1]:.4g}, "
                       f"initial error jet {[float('%.6g' % v) for v in self.e0[j - 1]]}")
        return out


def initial_error_jets(result: SimResult, ctrl: Controller, vform, ref: Reference) -> tuple:
    """e^j_[kappa_j - 1](t0) from the v-form at (x0, v-jets of the chain)."""
    from .tracking import eval_vchain

    bundle = ref.bundle(result.t0, ctrl.R)
    vals = eval_vchain(ctrl, result.x0, bundle)
    point = dict(zip(ctrl.states, result.x0))
    point.update(vals)
    point.update({sx.Param(k): float(v) for k, v in ctrl.params.items()})
    out = []
    for j in (1, 2):
        yd = ref.derivs(j, result.t0, max(ctrl.kappa[j - 1] - 1, 0))
        jet = [sx.evaluate(vform(j, a), point) - yd[a] for a in range(ctrl.kappa[j - 1])]
        out.append(tuple(jet))
    return tuple(out)


def error_dynamics_check(result: SimResult, ctrl: Controller, vform, ref: Reference,
                         tol: float = 1e-3, exact_tol: float = 1e-6) -> ErrorCheck:
    """Compare e(t) with the analytic solution of e_kappa + sum a_b e_b = 0.

    ``vform(j, a)`` returns the v-form expression of y^j_a.  Relative
    deviation is max|e_sim - e_an| / max(max|e_an|, 1e-6).
    """
    if result.truncated:
        raise CheckFailed(f"simulation was truncated: {result.reason}")
    e0 = initial_error_jets(result, ctrl, vform, ref)
    tt = result.t - result.t0
    devs, worst = [], []
    for j in (1, 2):
        sim = result.e[:, j - 1]
        if ctrl.kappa[j - 1] == 0:
            dev = np.abs(sim)
            lim = exact_tol
        else:
            poles = ctrl.gains.poles[j - 1] or tuple(np.roots(ctrl.gains.polynomial(j)).real)
            an = modal_solution(poles, e0[j - 1], tt)
            dev = np.abs(sim - an) / max(float(np.max(np.abs(an))), 1e-6)
            lim = tol
        k = int(np.argmax(dev))
        devs.append(float(dev[k]))
        worst.append(float(result.t[k]))
        if dev[k] >= lim:
            raise CheckFailed(
                f"channel {j} error deviates from the linear error dynamics by {dev[k]:.3e} "
                f"(limit {lim:g}) at t={result.t[k]:.6g}"
            )
    return ErrorCheck(tuple(devs), tuple(worst), e0, True)
