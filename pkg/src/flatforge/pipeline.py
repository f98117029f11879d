"""End-to-end chains used by the CLI, the scripts and the tests."""

from __future__ import annotations

from dataclasses import dataclass

from . import symexpr as sx
from .brunovsky import BrunovskyState, build_brunovsky
from .flatsys import FlatnessReport, analyze
from .linearize import StaticFeedback, TransformedChain, build_feedback, transform_system, transformed_chain
from .sysfile import ControllerRecord, SystemDoc
from .tracking import Controller, GainSet, VChain, assemble_law, default_poles, place_poles


@dataclass
class Design:
    doc: SystemDoc
    report: FlatnessReport
    fb: StaticFeedback
    chain: TransformedChain
    bstate: BrunovskyState

    def vform(self, j: int, a: int):
        return self.bstate.component(j, a)


def design(doc: SystemDoc, lead: int = 1, rng=None) -> Design:
    rng = sx.make_rng(rng)
    sys, spec = doc.sys, doc.spec
    report = analyze(sys, spec, rng)
    complement = doc.options.get("complement")
    fb = build_feedback(sys, spec.phi, report.K, lead=lead, complement=complement, rng=rng)
    sysbar = transform_system(sys, fb)
    chain = transformed_chain(sysbar, spec.phi, fb, report.K, report.R, rng)
    return Design(doc, report, fb, chain, build_brunovsky(chain))


def controller_for(d: Design, poles=None, guard: float = 1e-9) -> Controller:
    from .tracking import synthesize

    kappa = d.bstate.kappa
    gains = place_poles(kappa, poles if poles is not None else default_poles(kappa))
    return synthesize(d.doc.spec.Fu, d.bstate, gains, d.doc.sys.params, guard)


def controller_from_record(rec: ControllerRecord) -> tuple:
    """Rebuild (controller, vform lookup) from a serialized record."""
    solved, known = [], {}
    for v, e in rec.vchain:
        s = sx.substitute(e, known)
        known[v] = s
        solved.append(s)
    chain = VChain([v for v, _ in rec.vchain], [e for _, e in rec.vchain], solved)
    binds = {}
    for j in (1, 2):
        for a in range(rec.R[j - 1] + 1):
            y = sx.OutputJet(j, a)
            binds[y] = rec.vform[(j, a)] if a < rec.kappa[j - 1] else sx.var(sx.NewInputJet(j, a - rec.kappa[j - 1]))
    law = assemble_law(rec.Fu, binds, chain)
    gains = GainSet(tuple(tuple(g) for g in rec.gains), tuple(tuple(p) for p in rec.poles))
    ctrl = Controller(gains, rec.kappa, rec.R, rec.lead, tuple(rec.doc.sys.states),
                      dict(rec.doc.sys.params), chain, tuple(rec.Fu), law, rec.guard)
    return ctrl, (lambda j, a: rec.vform[(j, a)])
