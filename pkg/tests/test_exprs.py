from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from popsched.exprs import (
    ExpressionError,
    compile_arith,
    compile_predicate,
    parse_arith,
    parse_predicate,
)

NAMES = ("x", "y")


def evaluate(text: str, state) -> float:
    return compile_arith(parse_arith(text, NAMES), NAMES, ())(state)


def test_arithmetic_basics():
    assert evaluate("2 * x + y / 4", (3, 8)) == 8.0
    assert evaluate("x - 5 + y", (2, 10)) == 7.0
    assert evaluate("-x + 10", (4, 0)) == 6.0


def test_constants_are_bound():
    src = parse_arith("k * x", ("x", "k"))
    fn = compile_arith(src, ("x",), (("k", 2.5),))
    assert fn((4,)) == 10.0


def test_unknown_name_rejected():
    with pytest.raises(ExpressionError, match="unknown name 'z'"):
        parse_arith("z + 1", NAMES)


def test_negative_literal_rejected_but_unary_minus_ok():
    # "-1" parses as unary minus applied to the literal 1, which is allowed;
    # the ban is on weirder constants like booleans and strings.
    assert evaluate("0 - 1 + x", (5, 0)) == 4.0
    with pytest.raises(ExpressionError):
        parse_arith("'a' + x", NAMES)


@pytest.mark.parametrize("bad", ["x ** 2", "f(x)", "x if y else 1", "[x]", "x // y", "x % 2"])
def test_disallowed_constructs(bad):
    with pytest.raises(ExpressionError):
        parse_arith(bad, NAMES)


def test_syntax_error_reports_position():
    with pytest.raises(ExpressionError, match="offset"):
        parse_arith("x + * y", NAMES)


def test_canonical_form_is_stable():
    canon = parse_arith("x*y + ( y/2 )", NAMES)
    assert parse_arith(canon, NAMES) == canon


def test_predicates():
    fn = compile_predicate(parse_predicate("x == 1 and y < 3", NAMES), NAMES)
    assert fn((1, 2)) is True
    assert fn((1, 3)) is False
    assert fn((0, 0)) is False
    chained = compile_predicate(parse_predicate("0 <= x <= 2", NAMES), NAMES)
    assert chained((2, 0)) is True
    assert chained((3, 0)) is False


def test_predicate_rejects_plain_arithmetic():
    with pytest.raises(ExpressionError):
        parse_predicate("x + y", NAMES)


@given(
    a=st.integers(0, 40),
    b=st.integers(0, 40),
    c=st.floats(0, 10, allow_nan=False),
)
def test_matches_python_semantics(a, b, c):
    got = evaluate(f"x * {c!r} + y - x / 5", (a, b))
    assert got == pytest.approx(a * c + b - a / 5)
