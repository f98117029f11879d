"""Sectioned text format for systems and controller records.

    [params]          name = value
    [states]          x1 = display_name   (or just x1)
    [inputs]          u1 / u2
    [dynamics]        x1' = <expr>
    [flat_output]     y1 = <expr>, y2 = <expr>, optional R = (r1, r2)
    [parameterization]  helper := <expr>, x<i> = <expr>, u<j> = <expr>
    [domain]          x3 = [lo, hi], default = [lo, hi]
    [options]         complement = 1 | 2

Controller records add [controller], [brunovsky], [vchain] and [law].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from . import symexpr as sx
from .errors import FlatforgeError, SystemFileError, ValidationError
from .flatsys import U1, U2, ControlSystem, FlatSpec, MultiIndex, validate_flatspec, validate_system

SECTIONS = ("params", "states", "inputs", "dynamics", "flat_output", "parameterization",
            "domain", "options", "controller", "brunovsky", "vchain", "law")

_SECTION = re.compile(r"^\[([a-z_]+)\]$")
_INTERVAL = re.compile(r"^\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]$")
_PAIR = re.compile(r"^\(?\s*(-?\d+)\s*,\s*(-?\d+)\s*\)?$")


@dataclass
class SystemDoc:
    sys: ControlSystem
    spec: FlatSpec
    options: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)   # raw (lineno, key, value) lists for other sections


def _split_sections(text: str) -> dict:
    out: dict = {}
    cur = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            cur = m.group(1)
            if cur not in SECTIONS:
                raise SystemFileError(f"unknown section [{cur}]", no)
            if cur in out:
                raise SystemFileError(f"duplicate section [{cur}]", no)
            out[cur] = []
            continue
        if cur is None:
            raise SystemFileError("content before the first section header", no)
        if ":=" in line:
            k, v = line.split(":=", 1)
            out[cur].append((no, k.strip(), v.strip(), True))
        elif "=" in line:
            k, v = line.split("=", 1)
            out[cur].append((no, k.strip(), v.strip(), False))
        else:
            out[cur].append((no, line, None, False))
    return out


def _expr(text: str, no: int, macros: dict | None = None) -> sx.Expr:
    try:
        e = sx.parse_expr(text)
    except FlatforgeError as err:
        raise SystemFileError(f"{type(err).__name__}: {err}", no) from None
    if macros:
        e = sx.substitute(e, {sx.Param(k): v for k, v in macros.items() if sx.Param(k) in e.free})
    return e


def _var(name: str, no: int) -> sx.VarId:
    try:
        return sx.parse_var(name)
    except FlatforgeError as err:
        raise SystemFileError(str(err), no) from None


def _float(text: str, no: int) -> float:
    try:
        e = sx.parse_expr(text)
        return float(sx.evaluate(e, {}))
    except (FlatforgeError, ValueError):
        raise SystemFileError(f"expected a number, found {text!r}", no) from None


def parse_system(text: str, validate: bool = True, rng=None) -> SystemDoc:
    secs = _split_sections(text)
    for need in ("states", "inputs", "dynamics", "flat_output"):
        if need not in secs:
            raise SystemFileError(f"missing section [{need}]")

    params = {}
    for no, k, v, _ in secs.get("params", []):
        pv = _var(k, no)
        if pv.kind != sx.PARAM or v is None:
            raise SystemFileError(f"bad parameter line {k!r}", no)
        params[k] = _float(v, no)

    states, names = [], {}
    for no, k, v, _ in secs["states"]:
        s = _var(k, no)
        if s.kind != sx.STATE:
            raise SystemFileError(f"expected a state x<i>, found {k!r}", no)
        states.append(s)
        if v:
            names[s] = v
    if [s.index for s in states] != list(range(1, len(states) + 1)):
        raise SystemFileError("states must be x1..xn in order", secs["states"][0][0])

    if len(secs["inputs"]) != 2:
        raise ValidationError(f"exactly 2 inputs required, got {len(secs['inputs'])}")
    inputs = []
    for no, k, v, _ in secs["inputs"]:
        u = _var(k, no)
        if u.kind != sx.INPUT or u.order != 0:
            raise SystemFileError(f"expected an input u<j>, found {k!r}", no)
        inputs.append(u)
    if tuple(inputs) != (U1, U2):
        raise SystemFileError("inputs must be u1 and u2", secs["inputs"][0][0])

    rates = {}
    for no, k, v, _ in secs["dynamics"]:
        if not k.endswith("'") or v is None:
            raise SystemFileError("dynamics lines read x<i>' = <expr>", no)
        s = _var(k[:-1].strip(), no)
        if s not in states:
            raise SystemFileError(f"{k[:-1]} is not a declared state", no)
        if s in rates:
            raise SystemFileError(f"duplicate dynamics for {s}", no)
        rates[s] = _expr(v, no)
    missing = [str(s) for s in states if s not in rates]
    if missing:
        raise ValidationError(f"one dynamics line per state required; missing {', '.join(missing)}")

    phi, declared = {}, None
    for no, k, v, _ in secs["flat_output"]:
        if k == "R":
            m = _PAIR.match(v or "")
            if not m:
                raise SystemFileError("R must read (r1, r2)", no)
            declared = MultiIndex(int(m.group(1)), int(m.group(2)))
        elif k in ("y1", "y2") and v:
            phi[k] = _expr(v, no)
        else:
            raise SystemFileError(f"flat output lines define y1 and y2, found {k!r}", no)
    if set(phi) != {"y1", "y2"}:
        raise ValidationError("flat output must define y1 and y2")

    Fx, Fu = None, None
    if "parameterization" in secs:
        macros, px = {}, {}
        for no, k, v, is_macro in secs["parameterization"]:
            if v is None:
                raise SystemFileError("parameterization lines read <var> = <expr>", no)
            if is_macro:
                if _var(k, no).kind != sx.PARAM or k in params:
                    raise SystemFileError(f"bad helper name {k!r}", no)
                macros[k] = _expr(v, no, macros)
                continue
            px[_var(k, no)] = _expr(v, no, macros)
        want = list(states) + [U1, U2]
        miss = [str(w) for w in want if w not in px]
        if miss:
            raise ValidationError(f"parameterization must define all states and both inputs; missing {', '.join(miss)}")
        Fx = tuple(px[s] for s in states)
        Fu = (px[U1], px[U2])

    intervals, default = {}, (-1.0, 1.0)
    for no, k, v, _ in secs.get("domain", []):
        m = _INTERVAL.match(v or "")
        if not m:
            raise SystemFileError("domain lines read <var> = [lo, hi]", no)
        lo, hi = _float(m.group(1), no), _float(m.group(2), no)
        if not hi > lo:
            raise ValidationError(f"domain interval for {k} must have positive length")
        if k == "default":
            default = (lo, hi)
        else:
            intervals[_var(k, no)] = (lo, hi)

    options = {}
    for no, k, v, _ in secs.get("options", []):
        if k == "complement":
            if v not in ("1", "2", "u1", "u2"):
                raise SystemFileError("complement must be u1 or u2", no)
            options["complement"] = int(v[-1])
        else:
            raise SystemFileError(f"unknown option {k!r}", no)

    sys = ControlSystem(
        tuple(states), (U1, U2), tuple(rates[s] for s in states), params,
        sx.Domain(intervals, default), names,
    )
    spec = FlatSpec((phi["y1"], phi["y2"]), Fx, Fu, declared)
    if validate:
        validate_system(sys, rng)
        validate_flatspec(sys, spec, rng)
    extra = {k: v for k, v in secs.items() if k in ("controller", "brunovsky", "vchain", "law")}
    return SystemDoc(sys, spec, options, extra)


def load_system(path, validate: bool = True, rng=None) -> SystemDoc:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise SystemFileError(f"cannot read {path}: {err.strerror}") from None
    return parse_system(text, validate, rng)


def _num(v: float) -> str:
    return repr(float(v))


def serialize_system(doc: SystemDoc) -> str:
    sys, spec = doc.sys, doc.spec
    out = []
    if sys.params:
        out.append("[params]")
        out += [f"{k} = {_num(v)}" for k, v in sys.params.items()]
        out.append("")
    out.append("[states]")
    out += [f"{s} = {sys.names[s]}" if s in sys.names else str(s) for s in sys.states]
    out += ["", "[inputs]", "u1", "u2", "", "[dynamics]"]
    out += [f"{s}' = {f}" for s, f in zip(sys.states, sys.f)]
    out += ["", "[flat_output]", f"y1 = {spec.phi[0]}", f"y2 = {spec.phi[1]}"]
    if spec.R is not None:
        out.append(f"R = ({spec.R.a1}, {spec.R.a2})")
    if spec.Fx is not None:
        out += ["", "[parameterization]"]
        out += [f"{s} = {e}" for s, e in zip(sys.states, spec.Fx)]
        out += [f"u1 = {spec.Fu[0]}", f"u2 = {spec.Fu[1]}"]
    dom = sys.dom
    out += ["", "[domain]", f"default = [{_num(dom.default[0])}, {_num(dom.default[1])}]"]
    out += [f"{v} = [{_num(lo)}, {_num(hi)}]" for v, (lo, hi) in sorted(dom.intervals.items())]
    if doc.options:
        out += ["", "[options]"]
        out += [f"{k} = {v}" for k, v in doc.options.items()]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# controller records


def serialize_controller(doc: SystemDoc, ctrl, bstate) -> str:
    head = [
        "[controller]",
        f"kappa = ({ctrl.kappa.a1}, {ctrl.kappa.a2})",
        f"R = ({ctrl.R.a1}, {ctrl.R.a2})",
        f"lead = {ctrl.lead}",
        f"guard = {_num(ctrl.guard)}",
    ]
    for j in (1, 2):
        head.append(f"poles{j} = " + ", ".join(_num(p) for p in ctrl.gains.poles[j - 1]))
        head.append(f"gains{j} = " + ", ".join(_num(a) for a in ctrl.gains.a[j - 1]))
    body = ["", "[brunovsky]"]
    body += [f"y{j}_{a} = {e}" for (j, a), e in zip(bstate.labels, bstate.v_form)]
    body += ["", "[vchain]"]
    body += [f"{v} = {e}" for v, e in zip(ctrl.vchain.unknowns, ctrl.vchain.equations)]
    body += ["", "[law]", f"u1 = {ctrl.Fu[0]}", f"u2 = {ctrl.Fu[1]}"]
    return "\n".join(head) + "\n\n" + serialize_system(doc) + "\n".join(body) + "\n"


@dataclass
class ControllerRecord:
    doc: SystemDoc
    kappa: MultiIndex
    R: MultiIndex
    lead: int
    guard: float
    poles: tuple
    gains: tuple
    vform: dict      # (j, a) -> expr over x, v-jets
    vchain: list     # (VarId, expr)
    Fu: tuple


def _floats(v: str, no: int) -> tuple:
    v = v.strip()
    if not v:
        return ()
    return tuple(_float(t, no) for t in v.split(","))


def parse_controller(text: str, rng=None) -> ControllerRecord:
    doc = parse_system(text, validate=False)
    ex = doc.extra
    for need in ("controller", "brunovsky", "vchain", "law"):
        if need not in ex:
            raise SystemFileError(f"controller record lacks section [{need}]")
    meta = {}
    for no, k, v, _ in ex["controller"]:
        meta[k] = (no, v or "")
    try:
        kappa = MultiIndex(*map(int, _PAIR.match(meta["kappa"][1]).groups()))
        R = MultiIndex(*map(int, _PAIR.match(meta["R"][1]).groups()))
        lead = int(meta["lead"][1])
        guard = _float(meta["guard"][1], meta["guard"][0])
        poles = tuple(_floats(meta[f"poles{j}"][1], meta[f"poles{j}"][0]) for j in (1, 2))
        gains = tuple(_floats(meta[f"gains{j}"][1], meta[f"gains{j}"][0]) for j in (1, 2))
    except (KeyError, AttributeError, ValueError):
        raise SystemFileError("malformed [controller] section") from None
    vform = {}
    for no, k, v, _ in ex["brunovsky"]:
        y = _var(k, no)
        if y.kind != sx.OUTPUT:
            raise SystemFileError(f"expected y<j>_<a>, found {k!r}", no)
        vform[(y.index, y.order)] = _expr(v, no)
    vchain = []
    for no, k, v, _ in ex["vchain"]:
        w = _var(k, no)
        if w.kind != sx.NEWINPUT:
            raise SystemFileError(f"expected v<j>_<l>, found {k!r}", no)
        vchain.append((w, _expr(v, no)))
    law = {}
    for no, k, v, _ in ex["law"]:
        law[k] = _expr(v, no)
    if set(law) != {"u1", "u2"}:
        raise SystemFileError("[law] must define u1 and u2")
    return ControllerRecord(doc, kappa, R, lead, guard, poles, gains, vform, vchain,
                            (law["u1"], law["u2"]))


def load_controller(path, rng=None) -> ControllerRecord:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise SystemFileError(f"cannot read {path}: {err.strerror}") from None
    return parse_controller(text, rng)
