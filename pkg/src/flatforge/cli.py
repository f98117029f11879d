"""Command line front end: flatforge {analyze,prolong,brunovsky,synth,sim,verify}."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import symexpr as sx
from .brunovsky import check_Fx_rank, check_state_transformation
from .errors import CheckFailed, FlatforgeError
from .flatsys import check_lemma1, check_lemma2, compute_R, relative_degrees, verify_parameterization
from .linearize import check_inverse, check_sfl, phibar_of, prolong
from .pipeline import controller_for, controller_from_record, design
from .simkit import (
    SimConfig,
    error_dynamics_check,
    make_reference,
    on_reference_state,
    simulate,
    write_csv,
)
from .sysfile import load_controller, load_system, serialize_controller
from .tracking import check_triangular, zero_error_check

CORPUS = Path(__file__).with_name("corpus")


class UsageError(FlatforgeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def resolve(path: str) -> Path:
    """A missing path falls back to the shipped corpus file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (CORPUS / p.name, CORPUS / f"{p.name}.fsys"):
        if cand.exists():
            return cand
    return p


def seed_of(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FLATFORGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FLATFORGE_SEED must be an integer, got {env!r}") from None
    return 0


def _lead(args) -> int:
    return 2 if args.variant == "alt" else 1


def _names(doc):
    return dict(doc.sys.names)


def _poles(text: str | None):
    if text is None:
        return None
    chans = text.split(";")
    if len(chans) != 2:
        raise UsageError("poles read '<channel 1 list>;<channel 2 list>', e.g. ';-1,-2,-3'")
    try:
        return [[float(p) for p in c.split(",") if p.strip()] for c in chans]
    except ValueError:
        raise UsageError(f"bad pole list {text!r}") from None


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args, rng, out):
    doc = load_system(resolve(args.system), rng=rng)
    from .flatsys import analyze

    rep = analyze(doc.sys, doc.spec, rng)
    if args.json:
        print(json.dumps(rep.to_dict()), file=out)
        return 0
    print(f"n = {doc.sys.n}", file=out)
    print(f"K = {rep.K}", file=out)
    print(f"R = {rep.R}", file=out)
    print(f"codistribution dims = {rep.dims}", file=out)
    print(f"lemma1 = {'ok' if rep.lemma1_ok else 'violated'}", file=out)
    print(f"lemma2 = {'ok' if rep.lemma2_ok else 'violated'}", file=out)
    if rep.static_feedback_linearizable:
        print("static feedback linearizable (R = K), no prolongation needed", file=out)
    else:
        print(f"prolongations = {rep.prolongations}", file=out)
    return 0


def cmd_prolong(args, rng, out):
    doc = load_system(resolve(args.system), rng=rng)
    d = design(doc, _lead(args), rng)
    fb, chain = d.fb, d.chain
    pro = prolong(chain.sysbar, chain.p)
    names = _names(doc)
    print(f"ubar1 = {sx.to_text(fb.forward[0], names)}", file=out)
    print(f"ubar2 = {sx.to_text(fb.forward[1], names)}", file=out)
    print(f"complement: {fb.describe()}", file=out)
    print(f"prolongations p = {chain.p}", file=out)
    print("[states]", file=out)
    print("  " + ", ".join(names.get(s, str(s)) for s in pro.states), file=out)
    print("[inputs]", file=out)
    print("  " + ", ".join(str(u) for u in pro.inputs), file=out)
    print("[dynamics]", file=out)
    for s, f in zip(pro.states, pro.f):
        print(f"  {names.get(s, str(s))}' = {sx.to_text(f, names)}", file=out)
    ok = check_sfl(pro, phibar_of(doc.spec.phi, fb), d.report.R, rng)
    print(f"static feedback linearizable after prolongation: {ok}", file=out)
    return 0


def cmd_brunovsky(args, rng, out):
    doc = load_system(resolve(args.system), rng=rng)
    d = design(doc, _lead(args), rng)
    b = d.bstate
    names = _names(doc)
    print(f"kappa = {b.kappa}", file=out)
    for (j, a), c, v in zip(b.labels, b.components, b.v_form):
        print(f"y{j}_{a} = {sx.to_text(c, names)}", file=out)
        if v is not c:
            print(f"    v-form: {sx.to_text(v, names)}", file=out)
    print(f"state transformation regular: {check_state_transformation(b, rng=rng)}", file=out)
    if doc.spec.Fx is not None:
        print(f"F_x Jacobian regular: {check_Fx_rank(doc.sys, doc.spec, b.kappa, rng=rng)}", file=out)
    return 0


def cmd_synth(args, rng, out):
    doc = load_system(resolve(args.system), rng=rng)
    d = design(doc, _lead(args), rng)
    ctrl = controller_for(d, _poles(args.poles), args.guard)
    names = _names(doc)
    print(f"kappa = {ctrl.kappa}, R = {ctrl.R}", file=out)
    for j in (1, 2):
        print(f"channel {j}: poles {list(ctrl.gains.poles[j - 1])}, gains {list(ctrl.gains.a[j - 1])}",
              file=out)
    for v, e in zip(ctrl.vchain.unknowns, ctrl.vchain.equations):
        print(f"{v} = {sx.to_text(e, names)}", file=out)
    for k, e in enumerate(ctrl.law, 1):
        text = sx.to_text(e, names)
        if len(text) > 2000 and not args.full:
            text = text[:2000] + f" ... ({len(text)} characters, use --full)"
        print(f"u{k} = {text}", file=out)
    if args.out:
        Path(args.out).write_text(serialize_controller(doc, ctrl, d.bstate), encoding="utf-8")
        print(f"controller record written to {args.out}", file=out)
    return 0


def cmd_sim(args, rng, out):
    rec = load_controller(args.controller)
    ctrl, vform = controller_from_record(rec)
    ref = make_reference(args.ref)
    doc = rec.doc
    if args.x0 is None:
        if doc.spec.Fx is None:
            raise UsageError("--x0 is required when the record has no parameterization")
        x0 = on_reference_state(doc.spec.Fx, doc.sys.params, ref, args.t0, rec.R)
    else:
        x0 = _floats(args.x0)
    cfg = SimConfig(args.t0, args.t, args.dt, tuple(x0), rec.guard)
    t = time.perf_counter()
    res = simulate(doc.sys, doc.spec.phi, ctrl, ref, cfg)
    elapsed = time.perf_counter() - t
    if args.out:
        write_csv(res, args.out)
    print(f"rows = {res.rows}, elapsed {elapsed:.2f} s", file=out)
    print(f"max |e1| = {res.max_error(1):.3e}, max |e2| = {res.max_error(2):.3e}", file=out)
    if res.truncated:
        raise CheckFailed(f"simulation truncated: {res.reason}")
    chk = error_dynamics_check(res, ctrl, vform, ref, args.tol)
    for line in chk.lines():
        print(line, file=out)
    print("error dynamics check: PASS", file=out)
    return 0


def cmd_verify(args, rng, out):
    doc = load_system(resolve(args.system), rng=rng)
    sys_, spec = doc.sys, doc.spec
    results = []

    def run(name, fn):
        try:
            ok, detail = fn()
        except FlatforgeError as err:
            ok, detail = False, f"{type(err).__name__}: {err}"
        results.append((name, ok))
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""), file=out)

    K = relative_degrees(sys_, spec.phi, rng)
    R, dims = compute_R(sys_, spec.phi, K, spec.R, rng)
    p = R.total - sys_.n
    print(f"K = {K}, R = {R}, dims = {dims}", file=out)
    run("lemma1", lambda: (check_lemma1(dims), f"dims {dims}"))
    run("lemma2", lambda: (check_lemma2(sys_, spec.phi, K, rng), ""))
    run("equal differences", lambda: (R[0] - K[0] == R[1] - K[1] == p, f"r-k = {R[0] - K[0]}, #R-n = {p}"))
    for lead, label in ((1, "primary"), (2, "alternate")):
        try:
            d = design(doc, lead, rng)
        except FlatforgeError as err:
            run(f"{label}: triangular structure", lambda err=err: (False, f"{type(err).__name__}: {err}"))
            continue
        run(f"{label}: triangular structure", lambda: (True, d.fb.describe()))
        if d.fb.inverse is not None:
            run(f"{label}: inverse feedback", lambda: ((r := check_inverse(d.fb, rng=rng)) < 1e-9, f"residual {r:.1e}"))
        pb = phibar_of(spec.phi, d.fb)
        run(f"{label}: static feedback linearizable after {p} prolongations",
            lambda: (check_sfl(prolong(d.chain.sysbar, p), pb, R, rng), ""))
        if p > 0:
            run(f"{label}: not static feedback linearizable after {p - 1}",
                lambda: (not check_sfl(prolong(d.chain.sysbar, p - 1), pb, R, rng), ""))
        run(f"{label}: state transformation regular (kappa = {d.bstate.kappa})",
            lambda: (check_state_transformation(d.bstate, rng=rng), ""))
        if spec.Fx is not None:
            run(f"{label}: F_x Jacobian regular",
                lambda: (check_Fx_rank(sys_, spec, d.bstate.kappa, rng=rng), ""))
            run(f"{label}: tracking chain triangular",
                lambda: (check_triangular(controller_for(d).vchain) and zero_error_check(d.bstate, controller_for(d).gains), ""))
    if spec.Fx is not None:
        def roundtrip():
            r = verify_parameterization(sys_, spec, rng=rng)
            return r.ok, f"residual x {r.max_x_residual:.1e}, u {r.max_u_residual:.1e}"
        run("parameterization round trip", roundtrip)
    failed = [n for n, ok in results if not ok]
    if failed:
        raise CheckFailed(f"{len(failed)} certificate(s) failed: {', '.join(failed)}")
    print(f"all {len(results)} certificates passed", file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="flatforge", description=__doc__)
    ap.add_argument("--seed", type=int, default=None,
                    help="sampling seed (default: $FLATFORGE_SEED or 0)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def system_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("system", help="system file (.fsys); shipped examples resolve by name")
        return p

    p = system_cmd("analyze", "relative degrees, R, codistribution dims, lemma checks")
    p.add_argument("--json", action="store_true")
    for name, help_ in (("prolong", "print the prolonged system"),
                        ("brunovsky", "generalized Brunovsky state and its certificates")):
        p = system_cmd(name, help_)
        p.add_argument("--variant", choices=("primary", "alt"), default="primary")
    p = system_cmd("synth", "synthesize the tracking law")
    p.add_argument("--variant", choices=("primary", "alt"), default="primary")
    p.add_argument("--poles", help="'<ch1 poles>;<ch2 poles>', default all -2")
    p.add_argument("--guard", type=float, default=1e-9)
    p.add_argument("--out", help="write the controller record here")
    p.add_argument("--full", action="store_true", help="print the full law")
    p = sub.add_parser("sim", help="closed-loop simulation of a controller record")
    p.add_argument("--controller", required=True)
    p.add_argument("--ref", required=True, help="e.g. 'sin(0.2,1,0,1); poly(0,1)'")
    p.add_argument("--x0", help="comma separated initial state (default: on the reference)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t", type=float, default=5.0, help="final time")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", help="CSV output path")
    system_cmd("verify", "run every certificate")
    return ap


COMMANDS = {
    "analyze": cmd_analyze, "prolong": cmd_prolong, "brunovsky": cmd_brunovsky,
    "synth": cmd_synth, "sim": cmd_sim, "verify": cmd_verify,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        seed = seed_of(args)
        print(f"seed = {seed}", file=out)
        return COMMANDS[args.command](args, np.random.default_rng(seed), out)
    except (FlatforgeError, OSError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
