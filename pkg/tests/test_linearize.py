import numpy as np
import pytest

import flatforge.symexpr as sx
from flatforge.errors import StructureViolation
from flatforge.flatsys import derivatives
from flatforge.linearize import (
    build_feedback, build_feedback_alt, check_inverse, check_sfl, drop_vars, phibar_of, prolong,
    transform_system, transformed_chain,
)
from flatforge.sysfile import parse_system

from conftest import corpus_design, corpus_doc

P = sx.parse_expr


def _agree(a, b, sampler, trials=100, rel=1e-10, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        pt = sampler.sample(rng, a.free | b.free)
        va, vb = sx.evaluate(a, pt), sx.evaluate(b, pt)
        assert abs(va - vb) <= rel * max(1.0, abs(vb)), (str(a), str(b), pt)


@pytest.mark.parametrize("name, ubar1", [
    ("vehicle", "x1 + cos(x3)*u1"),
    ("academic", "x2 - x1*u2/u1"),
    ("vtol", "x1 - epsilon*sin(x3) + cos(x3)*u1 - 1 - epsilon*x6^2*cos(x3)"),
])
def test_primary_feedback(name, ubar1):
    d = corpus_design(name)
    doc = d.doc
    _agree(d.fb.forward[0], P(ubar1), doc.sys.sampler())
    assert d.fb.forward[1] is sx.var(sx.InputJet(2))
    assert d.fb.lead == 1 and d.fb.complement == 2


def test_vehicle_alternate_feedback():
    d = corpus_design("vehicle", 2)
    _agree(d.fb.forward[0], P("cos(x3)*u1"), d.doc.sys.sampler())


def test_vtol_alternate_feedback():
    doc = corpus_doc("vtol")
    d = corpus_design("vtol", 2)
    oracle = derivatives(P("x2 + epsilon*cos(x3)"), doc.sys, 2)[-1]
    _agree(d.fb.forward[0], oracle, doc.sys.sampler())


def test_complement_scores_and_pin():
    doc = corpus_doc("academic")
    free = build_feedback(doc.sys, doc.spec.phi, (0, 0), rng=0)
    assert free.scores[1] > 0 and free.scores[2] > 0
    assert free.complement == max((1, 2), key=lambda l: free.scores[l])
    pinned = build_feedback(doc.sys, doc.spec.phi, (0, 0), complement=2, rng=0)
    assert pinned.complement == 2


def test_inverse_identity(name, lead):
    d = corpus_design(name, lead)
    assert d.fb.inverse is not None
    assert check_inverse(d.fb, trials=100, rng=4) < 1e-9


def test_newton_inverse_matches_closed_form():
    d = corpus_design("vehicle")
    rng = np.random.default_rng(2)
    sampler = d.chain.sysbar.sampler()
    for _ in range(20):
        pt = sampler.sample(rng, {sx.State(1), sx.State(2), sx.State(3), sx.UbarJet(1), sx.UbarJet(2)})
        x = {s: pt[s] for s in d.doc.sys.states}
        ub = (pt[sx.UbarJet(1)], pt[sx.UbarJet(2)])
        u = d.fb.solve(x, ub)
        want = sx.evaluate_many(list(d.fb.inverse), pt)
        assert np.allclose(u, want, rtol=1e-10, atol=1e-12)


def test_academic_transformed_system():
    d = corpus_design("academic")
    want_f = [P("x1/(x2 - ubar1)*ubar2"), P("ubar2"), P("sqrt(x1/(x2 - ubar1))*ubar2")]
    for got, want in zip(d.chain.sysbar.f, want_f):
        _agree(got, want, d.chain.sysbar.sampler())


def test_vehicle_transformed_system():
    d = corpus_design("vehicle")
    want = [P("sin(x3)*(ubar1 - x1)/cos(x3)"), P("ubar1 - x1"), P("ubar2")]
    for got, w in zip(d.chain.sysbar.f, want):
        _agree(got, w, d.chain.sysbar.sampler())


def test_identity_feedback_keeps_system():
    text = """
[states]
x1
x2
x3
[inputs]
u1
u2
[dynamics]
x1' = u1
x2' = x3
x3' = u2
[flat_output]
y1 = x1
y2 = x2
"""
    doc = parse_system(text)
    fb = build_feedback(doc.sys, doc.spec.phi, (1, 2), rng=0)
    assert fb.forward == (sx.var(sx.InputJet(1)), sx.var(sx.InputJet(2)))
    sysbar = transform_system(doc.sys, fb)
    ren = {sx.UbarJet(1): sx.var(sx.InputJet(1)), sx.UbarJet(2): sx.var(sx.InputJet(2))}
    assert tuple(sx.substitute(f, ren) for f in sysbar.f) == doc.sys.f


def test_vehicle_chain_closed_forms():
    d = corpus_design("vehicle")
    rows = d.chain.rows
    y22 = P("(x1 - ubar1)*tan(x3) + ubar1_1")
    y23 = P("(ubar1 - x1)*((1 - ubar2)*tan(x3)^2 - ubar2) - ubar1_1*tan(x3) + ubar1_2")
    _agree(rows[1][2], y22, d.chain.sysbar.sampler())
    _agree(rows[1][3], y23, d.chain.sysbar.sampler())
    assert rows[1][1] is P("ubar1 - x1")
    assert rows[1][0] is P("x2")


def test_chain_structure(name, lead):
    d = corpus_design(name, lead)
    ch = d.chain
    lead_rows, other_rows = ch.rows[ch.lead - 1], ch.rows[ch.other - 1]
    k_lead = ch.K[ch.lead - 1]
    for b, e in enumerate(lead_rows[k_lead:]):
        assert e is sx.var(sx.UbarJet(1, b))
    ub2 = {v for v in sx.free_vars_all(other_rows[:-1]) if v.kind == sx.UBAR and v.index == 2}
    assert not ub2
    assert sx.UbarJet(2) in other_rows[-1].free
    assert ch.p == ch.R.total - d.doc.sys.n


def test_early_dependence_on_second_input_raises():
    # with R forced one order too high, ubar2 shows up before the last row
    text = """
[states]
x1
x2
x3
[inputs]
u1
u2
[dynamics]
x1' = u1
x2' = u1 + x3
x3' = u2
[flat_output]
y1 = x1
y2 = x2
"""
    doc = parse_system(text)
    fb = build_feedback(doc.sys, doc.spec.phi, (1, 1), rng=0)
    sysbar = transform_system(doc.sys, fb)
    transformed_chain(sysbar, doc.spec.phi, fb, (1, 1), (2, 2), rng=0)
    with pytest.raises(StructureViolation):
        transformed_chain(sysbar, doc.spec.phi, fb, (1, 1), (3, 3), rng=0)


def test_sfl_after_exact_prolongations(name, lead):
    d = corpus_design(name, lead)
    p = d.report.prolongations
    pb = phibar_of(d.doc.spec.phi, d.fb)
    assert check_sfl(prolong(d.chain.sysbar, p), pb, d.report.R, rng=0)
    assert not check_sfl(prolong(d.chain.sysbar, p - 1), pb, d.report.R, rng=0)


def test_prolonged_academic_shape():
    d = corpus_design("academic")
    pro = prolong(d.chain.sysbar, 3)
    assert pro.n == 6 == d.report.R.total
    assert pro.inputs == (sx.UbarJet(1, 3), sx.UbarJet(2))
    assert pro.f[3:] == tuple(sx.var(sx.UbarJet(1, a)) for a in (1, 2, 3))
    assert prolong(d.chain.sysbar, 0) is d.chain.sysbar


def test_drop_vars_removes_dead_variable():
    x1, ub = sx.var(sx.State(1)), sx.var(sx.UbarJet(2))
    e = (x1 * ub + x1) / (ub + 1) + sx.sin(x1)
    rng = np.random.default_rng(0)
    dom = sx.Domain({sx.UbarJet(2): (0.5, 2.0)})
    out = drop_vars(e, [sx.UbarJet(2)], dom, rng)
    assert sx.UbarJet(2) not in out.free
    assert sx.is_zero(out - (x1 + sx.sin(x1)), dom)


def test_feedback_alt_is_lead_two():
    doc = corpus_doc("vehicle")
    fb = build_feedback_alt(doc.sys, doc.spec.phi, (0, 1), rng=0)
    assert fb.lead == 2 and fb.other == 1
