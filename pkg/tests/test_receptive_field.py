import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aps_lab.receptive_field import ConvSpec, RfState, deformed_rf_bound, parse_stack, rf_table, static_rf

HEAD = [ConvSpec(3, 1, 1)] * 4


def closed_form(stack):
    total, prod = 1, 1
    for c in stack:
        total += (c.kernel - 1) * prod
        prod *= c.stride
    return total


def test_static_examples():
    assert static_rf(HEAD).rf == 9
    assert static_rf([ConvSpec(1, 1, 0)], RfState(5, 2)) == RfState(5, 2)
    assert static_rf([ConvSpec(3, 2, 1), ConvSpec(3, 2, 1)]) == RfState(7, 4)


def test_static_rejects_offsets():
    with pytest.raises(ValueError):
        static_rf([ConvSpec(3, 1, 1, 1.0)])


def test_deformed_examples():
    lo, hi = deformed_rf_bound(HEAD)
    assert lo == hi == static_rf(HEAD)
    stack = [ConvSpec(3, 1, 1, 1.0)] + [ConvSpec(3, 1, 1)] * 3
    lo, hi = deformed_rf_bound(stack)
    assert (lo.rf, hi.rf) == (9, 11)
    gaps = []
    for off in (0.5, 1.0, 2.0, 4.0):
        lo, hi = deformed_rf_bound([ConvSpec(3, 1, 1, off)] + [ConvSpec(3, 1, 1)] * 3)
        gaps.append(hi.rf - lo.rf)
    assert gaps == sorted(gaps) and len(set(gaps)) == 4


def test_conv_validation():
    for bad in [dict(kernel=2), dict(kernel=3, stride=0), dict(kernel=3, padding=-1), dict(kernel=3, max_offset=-1)]:
        with pytest.raises(ValueError):
            ConvSpec(**bad)


convs = st.builds(ConvSpec, st.sampled_from([1, 3, 5, 7]), st.integers(1, 3), st.integers(0, 3))
deform = st.builds(ConvSpec, st.sampled_from([1, 3, 5]), st.integers(1, 3), st.integers(0, 2), st.one_of(st.just(0.0), st.floats(0.01, 4)))


@settings(max_examples=200, deadline=None)
@given(st.lists(convs, min_size=1, max_size=8))
def test_static_closed_form(stack):
    out = static_rf(stack)
    assert isinstance(out.rf, int) and out.rf == closed_form(stack)


@settings(max_examples=200, deadline=None)
@given(st.lists(deform, min_size=1, max_size=6), st.lists(deform, min_size=1, max_size=6))
def test_bounds_and_associativity(a, b):
    lo, hi = deformed_rf_bound(a + b)
    plain = [ConvSpec(c.kernel, c.stride, c.padding) for c in a + b]
    assert lo.rf <= static_rf(plain).rf <= hi.rf
    assert (lo.rf == hi.rf) == all(c.max_offset == 0 for c in a + b)
    lo_a, hi_a = deformed_rf_bound(a)
    lo_ab, _ = deformed_rf_bound(b, lo_a)
    _, hi_ab = deformed_rf_bound(b, hi_a)
    assert lo_ab == lo
    assert hi_ab.rf == pytest.approx(hi.rf, rel=1e-12) and hi_ab.jump == hi.jump


def test_parse_and_table():
    rows = rf_table(parse_stack("3,1,1,1.0;3,1,1;3,1,1;3,1,1"))
    assert [r["static_rf"] for r in rows] == [3, 5, 7, 9]
    assert rows[-1]["max_rf"] == 11 and rows[-1]["min_rf"] == 9
    assert rf_table(parse_stack("1,1,0")) == [{"layer": 0, "static_rf": 1, "min_rf": 1, "max_rf": 1, "jump": 1}]
    for bad in ["3,1", "a,1,1", "", "3,1,1;4,1,1"]:
        with pytest.raises(ValueError):
            parse_stack(bad)
