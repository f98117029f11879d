import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import flatforge.symexpr as sx
from flatforge.errors import CountMismatch, MissingParameterization, SingularityEncountered
from flatforge.pipeline import controller_for
from flatforge.simkit import make_reference, on_reference_state
from flatforge.tracking import (
    RefBundle, build_v_chain, check_triangular, default_poles, eval_control, place_poles, synthesize,
    zero_error_check,
)

from conftest import corpus_design

P = sx.parse_expr


def test_place_poles_examples():
    assert place_poles((0, 3), [[], [-1, -2, -3]]).a == ((), (6.0, 11.0, 6.0))
    assert place_poles((0, 3), default_poles((0, 3))).a == ((), (8.0, 12.0, 6.0))
    g = place_poles((2, 1), [[-1, -1], [-4]])
    assert g.a == ((1.0, 2.0), (4.0,))
    assert list(g.polynomial(1)) == [1.0, 2.0, 1.0]


def test_place_poles_count_mismatch():
    with pytest.raises(CountMismatch):
        place_poles((0, 3), [[], [-1, -2]])
    with pytest.raises(CountMismatch):
        place_poles((0, 3), [[-1], [-1, -2, -3]])
    with pytest.raises(CountMismatch):
        place_poles((0, 1), [[], [float("nan")]])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-20, max_value=-0.05), min_size=1, max_size=6))
def test_placed_polynomial_is_hurwitz(poles):
    g = place_poles((0, len(poles)), [[], poles])
    roots = np.roots(g.polynomial(2))
    assert np.all(roots.real < 0)
    assert len(g.a[1]) == len(poles)


def test_vehicle_v_chain():
    b = corpus_design("vehicle").bstate
    g = place_poles(b.kappa, [[], [-1, -2, -3]])
    ch = build_v_chain(b, g)
    assert ch.unknowns == [sx.NewInputJet(1, a) for a in range(3)] + [sx.NewInputJet(2, 0)]
    for a in range(3):
        assert ch.solved[a] is sx.var(sx.RefJet(1, a))
    a = g.a[1]
    want = sx.var(sx.RefJet(2, 3))
    for beta in range(3):
        want = want - a[beta] * (b.component(2, beta) - sx.var(sx.RefJet(2, beta)))
    want = sx.substitute(want, {sx.NewInputJet(1, k): sx.var(sx.RefJet(1, k)) for k in range(3)})
    assert sx.is_zero(ch.solved[3] - want, sx.Domain())


def test_vtol_v_chain_shape():
    b = corpus_design("vtol").bstate
    ch = build_v_chain(b, place_poles(b.kappa, default_poles(b.kappa)))
    assert ch.unknowns == [sx.NewInputJet(1, a) for a in range(5)] + [sx.NewInputJet(2, 0)]
    for a in range(5):
        assert ch.solved[a] is sx.var(sx.RefJet(1, a))
    assert {v.kind for v in ch.solved[5].free} <= {sx.STATE, sx.REF, sx.PARAM}


def test_back_substitution_term():
    # kappa = (2, 1): v2_1 carries -a^{2,0} (v2 - yd2_1)
    b = corpus_design("vehicle", 2).bstate
    g = place_poles(b.kappa, [[-1, -2], [-5]])
    ch = build_v_chain(b, g)
    k = ch.unknowns.index(sx.NewInputJet(2, 1))
    want = P("yd2_2") - 5 * (sx.var(sx.NewInputJet(2, 0)) - P("yd2_1"))
    assert ch.equations[k] is want


def test_triangular_and_zero_error(name, lead):
    d = corpus_design(name, lead)
    g = place_poles(d.bstate.kappa, default_poles(d.bstate.kappa))
    ch = build_v_chain(d.bstate, g)
    assert check_triangular(ch)
    assert zero_error_check(d.bstate, g)


@pytest.mark.parametrize("name", ["vehicle", "vtol"])
def test_law_free_variables(name, lead):
    d = corpus_design(name, lead)
    ctrl = controller_for(d)
    R = d.report.R
    allowed = set(d.doc.sys.states) | set(d.doc.sys.param_values)
    allowed |= {sx.RefJet(j, a) for j in (1, 2) for a in range(R[j - 1] + 1)}
    free = sx.free_vars_all(ctrl.law)
    assert free <= allowed
    assert set(d.doc.sys.states) <= free
    assert sx.RefJet(2, R[1]) in free


def test_missing_parameterization():
    d = corpus_design("academic")
    g = place_poles(d.bstate.kappa, default_poles(d.bstate.kappa))
    with pytest.raises(MissingParameterization):
        synthesize(None, d.bstate, g)


def test_vtol_hover():
    d = corpus_design("vtol")
    ctrl = controller_for(d)
    eps = d.doc.sys.params["epsilon"]
    y1, y2 = 0.4, 1.5
    ref = RefBundle((y1,) + (0.0,) * 4, (y2,) + (0.0,) * 6)
    x = (y1, y2 - eps, 0.0, 0.0, 0.0, 0.0)
    u = eval_control(ctrl, x, ref)
    assert u == pytest.approx((1.0, 0.0), abs=1e-12)


def test_vehicle_on_reference_fixed_point():
    d = corpus_design("vehicle")
    ctrl = controller_for(d, [[], [-1, -2, -3]])
    ref = make_reference("sin(0.2,1,0,1); poly(0,1)")
    R = d.report.R
    for t in (0.0, 0.7, 2.3):
        x = on_reference_state(d.doc.spec.Fx, {}, ref, t, R)
        bundle = ref.bundle(t, R)
        point = {sx.OutputJet(j, a): v for j, ys in ((1, bundle.y1), (2, bundle.y2)) for a, v in enumerate(ys)}
        want = sx.evaluate_many(list(d.doc.spec.Fu), point)
        assert eval_control(ctrl, x, bundle) == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_vehicle_singularity():
    d = corpus_design("vehicle")
    ctrl = controller_for(d)
    ref = make_reference("sin(0.2,1,0,1); poly(0,1)").bundle(0.0, d.report.R)
    x = (0.1, 0.2, math.pi / 2 - 1e-12)
    with pytest.raises(SingularityEncountered):
        eval_control(ctrl, x, ref)


def test_short_reference_rejected():
    d = corpus_design("vehicle")
    ctrl = controller_for(d)
    with pytest.raises(CountMismatch):
        eval_control(ctrl, (0.0, 0.0, 0.1), RefBundle((1.0, 0.0), (0.0, 1.0)))
