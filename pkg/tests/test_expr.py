import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zvonkinlab.expr import ExpressionError, parse

X = np.linspace(-2, 2, 9)[:, None]


@pytest.mark.parametrize("text,expected", [
    ("1", lambda t, x: np.ones_like(x)),
    ("0.3*cos(x)", lambda t, x: 0.3 * np.cos(x)),
    ("2^0.5", lambda t, x: np.full_like(x, np.sqrt(2))),
    ("x**2 - 3*x + 1", lambda t, x: x**2 - 3 * x + 1),
    ("-x1 + t", lambda t, x: -x + t),
    ("exp(-abs(x))*sin(pi*x)", lambda t, x: np.exp(-np.abs(x)) * np.sin(np.pi * x)),
    ("indicator(x,-1,1)", lambda t, x: ((x >= -1) & (x <= 1)).astype(float)),
    ("e", lambda t, x: np.full_like(x, np.e)),
])
def test_grammar(text, expected):
    np.testing.assert_allclose(parse(text)(0.5, X), expected(0.5, X[:, 0]))


def test_caret_is_power_not_xor():
    assert parse("2^3")(0.0, X)[0] == 8.0


def test_constants_and_second_coordinate():
    e = parse("c*(T-t) + x2", dim=2, constants={"c": 2.0, "T": 1.0})
    pts = np.array([[0.0, 5.0]])
    assert e(0.25, pts)[0] == pytest.approx(2 * 0.75 + 5)
    assert "x2" in e.names


@pytest.mark.parametrize("text,dim,position", [
    ("foo(x)", 1, 1),
    ("1 + y", 1, 5),
    ("x2", 1, 1),
    ("sin(x, 2)", 1, 1),
    ("indicator(x, 1)", 1, 1),
    ("x +* 2", 1, 4),
    ("x ^ -y", 1, 6),
    ("'a'", 1, 1),
    ("x if x else 1", 1, 1),
])
def test_rejections_name_a_position(text, dim, position):
    with pytest.raises(ExpressionError) as info:
        parse(text, dim)
    assert info.value.position == position
    assert f"position {position}" in str(info.value)


def test_singularity_evaluates_without_warnings():
    with np.errstate(all="raise"):
        v = parse("abs(x)^(-0.25)")(0.0, np.array([[0.0], [1.0]]))
    assert np.isinf(v[0]) and v[1] == 1.0


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_arithmetic_matches_python(a, b):
    e = parse(f"({a!r}) * x + ({b!r}) - x/2")
    x = np.array([[1.5]])
    assert e(0.0, x)[0] == pytest.approx(a * 1.5 + b - 0.75, rel=1e-12, abs=1e-12)
