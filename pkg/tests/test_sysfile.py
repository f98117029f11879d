import pytest

import flatforge.symexpr as sx
from flatforge.errors import SystemFileError, ValidationError
from flatforge.pipeline import controller_for, controller_from_record
from flatforge.sysfile import load_system, parse_controller, parse_system, serialize_controller, serialize_system

from conftest import CORPUS, corpus_design, corpus_doc

MINIMAL = """
[states]
x1
x2
[inputs]
u1
u2
[dynamics]
x1' = u1
x2' = u2
[flat_output]
y1 = x1
y2 = x2
"""


def test_corpus_loads():
    assert corpus_doc("vehicle").sys.n == 3
    vtol = corpus_doc("vtol")
    assert vtol.sys.params == {"epsilon": 0.1}
    assert vtol.sys.names[sx.State(3)] == "theta"
    assert corpus_doc("academic").spec.Fx is None
    assert corpus_doc("academic").options == {"complement": 2}


def test_round_trip(name):
    doc = corpus_doc(name)
    back = parse_system(serialize_system(doc))
    assert back.sys.states == doc.sys.states
    assert back.sys.f == doc.sys.f
    assert back.spec.phi == doc.spec.phi
    assert back.spec.Fx == doc.spec.Fx and back.spec.Fu == doc.spec.Fu
    assert back.spec.R == doc.spec.R
    assert back.sys.params == doc.sys.params
    assert dict(back.sys.dom.intervals) == dict(doc.sys.dom.intervals)
    assert back.options == doc.options


def test_macros_expand():
    doc = corpus_doc("vehicle")
    assert doc.spec.Fx[2] is sx.parse_expr("atan2(y1_1 - y2_2, y2_1)")


@pytest.mark.parametrize("text, line", [
    ("[states]\nx1\n[bogus]\n", 3),
    ("x1' = u1\n", 1),
    (MINIMAL.replace("x2' = u2", "x2' = u2 +"), 10),
    (MINIMAL.replace("x2' = u2", "x3' = u2"), 10),
    (MINIMAL + "[domain]\nx1 = 1, 0\n", 15),
    (MINIMAL + "[params]\nk = abc(\n", 15),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(SystemFileError) as info:
        parse_system(text)
    assert info.value.line == line
    assert f"line {line}:" in str(info.value)


def test_empty_interval_rejected():
    with pytest.raises(ValidationError):
        parse_system(MINIMAL + "[domain]\nx1 = [1, 0]\n")


def test_missing_dynamics_line():
    text = MINIMAL.replace("x2' = u2\n", "")
    with pytest.raises((SystemFileError, ValidationError)):
        parse_system(text)


def test_missing_file(tmp_path):
    with pytest.raises(SystemFileError):
        load_system(tmp_path / "absent.fsys")


def test_load_from_path():
    assert load_system(CORPUS / "vehicle.fsys").sys.n == 3


def test_controller_record_round_trip(lead):
    d = corpus_design("vtol", lead)
    ctrl = controller_for(d, None)
    text = serialize_controller(d.doc, ctrl, d.bstate)
    rec = parse_controller(text)
    assert rec.kappa == ctrl.kappa and rec.R == ctrl.R and rec.lead == lead
    again, vform = controller_from_record(rec)
    assert again.law == ctrl.law
    assert again.gains.a == ctrl.gains.a
    assert vform(*d.bstate.labels[-1]) is d.bstate.v_form[-1]


def test_controller_record_needs_sections():
    with pytest.raises(SystemFileError):
        parse_controller(MINIMAL)
