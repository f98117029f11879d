"""Final-state error of the RK4 loop against a fine-step run, halving dt."""

import numpy as np

from flatforge.cli import resolve
from flatforge.pipeline import controller_for, design
from flatforge.simkit import SimConfig, make_reference, on_reference_state, simulate
from flatforge.sysfile import load_system

REF = {"vehicle": "sin(0.2,1,0,1); poly(0,1)", "vtol": "sin(0.5,1,0,0); const(0)"}


def final_state(doc, ctrl, ref, x0, dt):
    return simulate(doc.sys, doc.spec.phi, ctrl, ref, SimConfig(0.0, 1.0, dt, tuple(x0))).x[-1]


for name, text in REF.items():
    doc = load_system(resolve(name), rng=0)
    d = design(doc, rng=0)
    ctrl = controller_for(d)
    ref = make_reference(text)
    x0 = np.array(on_reference_state(doc.spec.Fx, doc.sys.params, ref, 0.0, d.report.R))
    x0[:3] += [0.05, -0.05, 0.05]
    fine = final_state(doc, ctrl, ref, x0, 1 / 1280)
    prev = None
    print(name)
    for n in (20, 40, 80, 160):
        err = np.max(np.abs(final_state(doc, ctrl, ref, x0, 1 / n) - fine))
        ratio = f"{prev / err:6.2f}" if prev else "     -"
        print(f"  dt=1/{n:<4d} err={err:.3e} ratio={ratio}")
        prev = err
