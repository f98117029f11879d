import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

import flatforge.symexpr as sx
from flatforge.errors import CheckFailed, UnsupportedAtom, ValidationError
from flatforge.pipeline import controller_for
from flatforge.simkit import (
    Const, Poly, Sine, SimConfig, error_dynamics_check, initial_error_jets, make_atom, make_reference,
    modal_solution, on_reference_state, simulate, write_csv,
)
from flatforge.tracking import eval_vchain

from conftest import corpus_design

VEHICLE_REF = "sin(0.2,1,0,1); poly(0,1)"


def run(name, ref_text, dt, tf=5.0, poles=None, dx=None):
    d = corpus_design(name)
    ctrl = controller_for(d, poles)
    ref = make_reference(ref_text)
    x0 = np.array(on_reference_state(d.doc.spec.Fx, d.doc.sys.params, ref, 0.0, d.report.R))
    if dx is not None:
        x0[: len(dx)] += dx
    res = simulate(d.doc.sys, d.doc.spec.phi, ctrl, ref, SimConfig(0.0, tf, dt, tuple(x0)))
    return d, ctrl, ref, res


def test_sine_cycle():
    s = Sine(1.0, 1.0)
    t = 0.37
    want = [math.sin(t), math.cos(t), -math.sin(t), -math.cos(t), math.sin(t)]
    assert [s.derivative(t, k) for k in range(5)] == pytest.approx(want, rel=1e-15)


def test_const_and_cubic():
    c = Const(2.5)
    assert c.derivative(1.0, 0) == 2.5
    assert all(c.derivative(1.0, k) == 0.0 for k in range(1, 6))
    p = Poly((1.0, -2.0, 0.5, 3.0))
    assert p.derivative(0.7, 4) == 0.0
    assert p.derivative(2.0, 3) == 18.0
    assert p.derivative(2.0, 0) == pytest.approx(1 - 4 + 2 + 24)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(0.2, 2), st.floats(-3, 3), st.floats(-1, 1),
       st.integers(0, 4), st.floats(0, 5))
def test_atom_derivatives_match_finite_differences(A, w, phi, c, order, t):
    atoms = [Sine(A, w, phi, c), Poly((c, A, w, phi))]
    h = 1e-4
    for a in atoms:
        num = (a.derivative(t + h, order) - a.derivative(t - h, order)) / (2 * h)
        sym = a.derivative(t, order + 1)
        assert abs(num - sym) <= 1e-7 * max(1.0, abs(sym)) + 1e-8 * max(1.0, abs(a.derivative(t, order)))


def test_make_reference_parses_sums():
    ref = make_reference("sin(1,2,0,0.5) + poly(0,1); const(3)")
    assert len(ref.channels[0]) == 2
    assert ref.derivs(1, 0.0, 1) == pytest.approx([0.5, 2.0 + 1.0])
    assert ref.derivs(2, 4.0, 2) == [3.0, 0.0, 0.0]


@pytest.mark.parametrize("text", ["exp(1)", "sin()", "poly(a)", "const(1,2)", "sin(1,2,3,4,5)", "sin(inf)"])
def test_unsupported_atoms(text):
    with pytest.raises(UnsupportedAtom):
        make_reference(text if ";" in text else f"{text}; const(0)")


def test_make_atom_rejects_garbage():
    with pytest.raises(UnsupportedAtom):
        make_atom("sin(1")


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(tf=0.0), dict(dt=1e-9)])
def test_sim_config_validation(kw):
    args = dict(t0=0.0, tf=1.0, dt=0.1, x0=(0.0,))
    args.update(kw)
    with pytest.raises(ValidationError):
        SimConfig(**args)


def test_rows_and_stored_output():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 0.01, tf=1.0)
    assert res.rows == 101 and not res.truncated
    for x, u, y in zip(res.x[::10], res.u[::10], res.y[::10]):
        pt = dict(zip(d.doc.sys.states, x))
        pt.update({sx.InputJet(1): u[0], sx.InputJet(2): u[1]})
        assert sx.evaluate_many(list(d.doc.spec.phi), pt) == pytest.approx(y, abs=1e-12)


def test_vehicle_on_reference():
    _, _, _, res = run("vehicle", VEHICLE_REF, 1e-3)
    assert res.max_error() < 1e-6


def test_rk4_order_on_reference():
    errs = [run("vehicle", VEHICLE_REF, dt)[3].max_error() for dt in (0.05, 0.025)]
    assert 12 <= errs[0] / errs[1] <= 20


def test_stored_input_consistent_with_state():
    # x2(tf) - x2(t0) equals the integral of cos(x3) u1 along the stored rows
    _, _, _, res = run("vehicle", VEHICLE_REF, 1e-3, tf=2.0, dx=[0.05, -0.05, 0.05])
    rate = np.cos(res.x[:, 2]) * res.u[:, 0]
    h = res.t[1] - res.t[0]
    simpson = h / 3 * (rate[0] + rate[-1] + 4 * rate[1:-1:2].sum() + 2 * rate[2:-1:2].sum())
    assert simpson == pytest.approx(res.x[-1, 1] - res.x[0, 1], abs=1e-8)


def test_perturbed_error_decays():
    poles = [[], [-1, -2, -3]]
    _, _, _, res = run("vehicle", VEHICLE_REF, 1e-3, poles=poles, dx=[0.05, -0.05, 0.05])
    e2 = np.abs(res.e[:, 1])
    assert e2[-1] < max(e2[0], 1e-3) * math.exp(-1.0 * 5.0) * 10


def test_vehicle_error_dynamics():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 1e-3, poles=[[], [-1, -2, -3]], dx=[0.05, -0.05, 0.05])
    chk = error_dynamics_check(res, ctrl, d.vform, ref, tol=1e-3)
    assert chk.passed and chk.deviation[1] < 1e-3 and chk.deviation[0] < 1e-6
    assert len(chk.lines()) == 2


def test_on_reference_check_is_trivial():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 1e-2, tf=1.0)
    chk = error_dynamics_check(res, ctrl, d.vform, ref)
    assert all(abs(v) < 1e-9 for v in chk.e0[1])


def test_wrong_gains_fail_the_check():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 1e-3, tf=3.0, poles=[[], [-1, -2, -3]], dx=[0.05, -0.05, 0.05])
    other = controller_for(d, [[], [-0.5, -0.7, -4.0]])
    with pytest.raises(CheckFailed):
        error_dynamics_check(res, other, d.vform, ref)


def test_truncated_run_fails_the_check():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 1e-2, tf=1.0)
    res.truncated, res.reason = True, "forced"
    with pytest.raises(CheckFailed):
        error_dynamics_check(res, ctrl, d.vform, ref)


def test_singular_start_truncates():
    d = corpus_design("vehicle")
    ctrl = controller_for(d)
    ref = make_reference(VEHICLE_REF)
    res = simulate(d.doc.sys, d.doc.spec.phi, ctrl, ref, SimConfig(0.0, 1.0, 0.01, (0.0, 0.0, math.pi / 2)))
    assert res.truncated and "Singularity" in res.reason


def test_v_form_agrees_with_simulated_output():
    d, ctrl, ref, res = run("vehicle", VEHICLE_REF, 1e-3, tf=2.0, poles=[[], [-1, -2, -3]], dx=[0.05, -0.05, 0.05])
    y2 = res.y[:, 1]
    h = res.t[1] - res.t[0]
    dy = [y2, np.gradient(y2, h, edge_order=2)]
    dy.append(np.gradient(dy[1], h, edge_order=2))
    params = {sx.Param(k): v for k, v in d.doc.sys.params.items()}
    for i in range(100, res.rows - 100, 97):
        vals = eval_vchain(ctrl, res.x[i], ref.bundle(res.t[i], ctrl.R))
        pt = dict(zip(d.doc.sys.states, res.x[i]))
        pt.update(vals)
        pt.update(params)
        for a in range(3):
            assert sx.evaluate(d.vform(2, a), pt) == pytest.approx(dy[a][i], abs=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([-0.5, -1.0, -2.0, -3.0]), min_size=1, max_size=6),
       st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_modal_solution_matches_matrix_exponential(poles, e0):
    k = len(poles)
    a = np.poly(poles)[1:][::-1]
    A = np.zeros((k, k))
    A[:-1, 1:] = np.eye(k - 1)
    A[-1, :] = -a
    t = np.linspace(0, 3, 7)
    want = np.array([(expm(A * tt) @ np.array(e0[:k]))[0] for tt in t])
    got = modal_solution(poles, e0[:k], t)
    assert np.allclose(got, want, rtol=1e-8, atol=1e-9)


def test_initial_error_jets_zero_on_reference():
    d, ctrl, ref, res = run("vtol", "sin(0.5,1,0,0); const(0)", 1e-2, tf=0.1)
    e0 = initial_error_jets(res, ctrl, d.vform, ref)
    assert e0[0] == () and len(e0[1]) == 6
    assert max(map(abs, e0[1])) < 1e-12


def test_csv_layout():
    _, _, _, res = run("vehicle", VEHICLE_REF, 0.1, tf=0.5)
    buf = io.StringIO()
    write_csv(res, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x1,x2,x3,u1,u2,y1,y2,yd1,yd2,e1,e2"
    assert len(lines) == res.rows + 1
    first = [float(v) for v in lines[1].split(",")]
    assert first[1:4] == list(res.x[0])
