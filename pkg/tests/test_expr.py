import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sackersell.expr import ExprDomainError, ExprError, ExprSyntaxError, differentiate, evaluate, parse


def test_parse_time_dependent_entry_evaluates_at_zero():
    assert parse("-1 + 1.5*cos(t)^2", ["t"])(t=0.0) == pytest.approx(0.5, abs=1e-15)


def test_parse_constant_with_empty_environment():
    e = parse("0", [])
    assert e.is_constant
    assert e() == 0.0


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("t*", ["t"])
    assert info.value.offset == 2


@pytest.mark.parametrize("text", ["", "1 +", "sin(", "(t", "t t", "sin(t, t)"])
def test_malformed_inputs_raise_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse(text, ["t"])


def test_undeclared_variable_is_rejected():
    with pytest.raises(ExprError):
        parse("x1 + t", ["t"])


@pytest.mark.parametrize(
    "text, t, value",
    [
        ("-1+1.5*cos(t)^2", 0.0, 0.5),
        ("exp(-t)", 0.0, 1.0),
        ("1.5*cos(t)*sin(t)", math.pi / 4, 0.75),
        ("2^3^2", 0.0, 512.0),
        ("-t^2", 3.0, -9.0),
    ],
)
def test_evaluate_closed_forms(text, t, value):
    assert evaluate(parse(text, ["t"]), {"t": t}) == pytest.approx(value, abs=1e-14)


def test_missing_binding_is_an_error():
    with pytest.raises(ExprError):
        evaluate(parse("t + 1", ["t"]), {})


def test_domain_error_names_the_node():
    with pytest.raises(ExprDomainError):
        evaluate(parse("ln(t)", ["t"]), {"t": -1.0})
    f = parse("sqrt(t)", ["t"]).vectorized()
    with pytest.raises(ExprDomainError):
        f({"t": np.array([1.0, -1.0])})


def test_vectorized_matches_scalar():
    e = parse("sin(t)*x1 - x1^3/(1 + t^2)", ["t", "x1"])
    ts = np.linspace(-2, 2, 7)
    xs = np.linspace(-1, 1, 7)
    got = e.vectorized()({"t": ts, "x1": xs})
    want = [e(t=t, x1=x) for t, x in zip(ts, xs)]
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize(
    "text, var, expected",
    [
        ("x1^2 + t*x1", "x1", "2*x1 + t"),
        ("cos(t)", "t", "-sin(t)"),
        ("x1", "x2", "0"),
    ],
)
def test_differentiate_closed_forms(text, var, expected):
    env = ["t", "x1", "x2"]
    d = differentiate(parse(text, env), var)
    oracle = parse(expected, env)
    for t, x1, x2 in [(0.3, -1.2, 0.7), (2.0, 0.5, -3.0), (-1.1, 2.2, 0.0)]:
        assert d(t=t, x1=x1, x2=x2) == pytest.approx(oracle(t=t, x1=x1, x2=x2), abs=1e-13)


_leaf = st.one_of(
    st.sampled_from(["t", "x1", "pi"]),
    st.floats(min_value=-4, max_value=4, allow_nan=False).map(lambda v: repr(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        st.tuples(children, children).map(lambda p: f"({p[0]})/(2 + sin({p[1]}))"),
        st.tuples(st.sampled_from(["sin", "cos", "atan", "tanh"]), children).map(lambda p: f"{p[0]}({p[1]})"),
        children.map(lambda c: f"-({c})"),
        children.map(lambda c: f"({c})^2"),
    )


expressions = st.recursive(_leaf, _extend, max_leaves=12)


@settings(max_examples=60, deadline=None)
@given(expressions)
def test_print_reparse_round_trip(text):
    env = ["t", "x1"]
    e = parse(text, env)
    again = parse(str(e), env)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(100, 2))
    a = e.vectorized()({"t": pts[:, 0], "x1": pts[:, 1]})
    b = again.vectorized()({"t": pts[:, 0], "x1": pts[:, 1]})
    np.testing.assert_allclose(np.broadcast_to(a, (100,)), np.broadcast_to(b, (100,)), rtol=0, atol=1e-12 * (1 + np.max(np.abs(a))))


@settings(max_examples=60, deadline=None)
@given(expressions)
def test_derivative_matches_central_differences(text):
    env = ["t", "x1"]
    e = parse(text, env)
    d = differentiate(e, "x1")
    rng = np.random.default_rng(1)
    for t, x in rng.uniform(-2, 2, size=(5, 2)):
        h = 1e-5
        fd = (e(t=t, x1=x + h) - e(t=t, x1=x - h)) / (2 * h)
        assert d(t=t, x1=x) == pytest.approx(fd, rel=1e-5, abs=1e-5 * (1 + abs(e(t=t, x1=x))))
