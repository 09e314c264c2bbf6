from __future__ import annotations

import math
import random
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisoeig import expr as ex
from anisoeig.errors import ArityError, EvaluationError, ExprSyntaxError, UnknownIdentifierError

# ------------------------------------------------- shunting-yard oracle
#
# An independent evaluator: Dijkstra's shunting-yard to RPN, then a stack
# machine on Python floats with the math module. Same precedence contract:
# ^ (right) > unary minus > * / (left) > + - (left).

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_RIGHT = {"^", "neg"}
_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt, "abs": abs}


def _rpn(text: str) -> list:
    tokens = re.findall(r"\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+|[A-Za-z]+|[-+*/^()]", text)
    out, ops = [], []
    prev = None  # None, "operand", "operator", "("
    for t in tokens:
        if re.match(r"[\d.]", t) or t in ("y", "z", "pi"):
            out.append(t)
            prev = "operand"
        elif t in _FUNCS:
            ops.append(t)
            prev = "operator"
        elif t == "(":
            ops.append(t)
            prev = "("
        elif t == ")":
            while ops[-1] != "(":
                out.append(ops.pop())
            ops.pop()
            if ops and ops[-1] in _FUNCS:
                out.append(ops.pop())
            prev = "operand"
        else:
            if t in "+-" and prev != "operand":
                if t == "-":
                    ops.append("neg")
                prev = "operator"
                continue
            while ops and ops[-1] in _PREC:
                top = ops[-1]
                if _PREC[top] > _PREC[t] or (_PREC[top] == _PREC[t] and t not in _RIGHT):
                    out.append(ops.pop())
                else:
                    break
            ops.append(t)
            prev = "operator"
    while ops:
        out.append(ops.pop())
    return out


def oracle(text: str, y: float, z: float) -> float:
    stack = []
    for t in _rpn(text):
        if t == "y":
            stack.append(y)
        elif t == "z":
            stack.append(z)
        elif t == "pi":
            stack.append(math.pi)
        elif t == "neg":
            stack.append(-stack.pop())
        elif t in _FUNCS:
            stack.append(_FUNCS[t](stack.pop()))
        elif t in _PREC:
            b, a = stack.pop(), stack.pop()
            if t == "+":
                stack.append(a + b)
            elif t == "-":
                stack.append(a - b)
            elif t == "*":
                stack.append(a * b)
            elif t == "/":
                stack.append(a / b)
            else:
                stack.append(math.pow(a, b))
        else:
            stack.append(float(t))
    (value,) = stack
    if not math.isfinite(value):
        raise OverflowError
    return value


def _random_source(rng: random.Random, depth: int) -> str:
    """Unparenthesized-where-possible expression text, so precedence matters."""
    if depth == 0 or rng.random() < 0.25:
        return rng.choice(["y", "z", "pi", "2", "0.5", "3", "1.25", "7"])
    kind = rng.random()
    if kind < 0.55:
        op = rng.choice(["+", "-", "*", "/", "^", "*", "+"])
        return f"{_random_source(rng, depth - 1)} {op} {_random_source(rng, depth - 1)}"
    if kind < 0.7:
        return f"-{_random_source(rng, depth - 1)}"
    if kind < 0.85:
        return f"{rng.choice(list(_FUNCS))}({_random_source(rng, depth - 1)})"
    return f"({_random_source(rng, depth - 1)})"


def test_random_expressions_agree_with_shunting_yard_oracle():
    rng = random.Random(20240601)
    compared = 0
    while compared < 100:
        src = _random_source(rng, 4)
        y, z = rng.uniform(0, 1), rng.uniform(0, 1)
        try:
            expected = oracle(src, y, z)
        except (ZeroDivisionError, ValueError, OverflowError):
            # Python raises on intermediate overflow where IEEE arithmetic
            # carries an inf that may cancel later; error paths are tested separately.
            continue
        got = ex.evaluate(ex.parse(src), y, z)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12), src
        compared += 1


@pytest.mark.parametrize(
    "src, y, z, expected",
    [
        ("1", 0.3, 0.7, 1.0),
        ("cos(2*pi*y)", 0.5, 0.0, -1.0),
        ("2 + 3 * y ^ 2", 2.0, 0.0, 14.0),
        ("5", 0.9, 0.1, 5.0),
        ("y - y", 0.42, 0.0, 0.0),
        ("exp(0*z)", 0.0, 3.0, 1.0),
        ("-2^2", 0, 0, -4.0),
        ("2^-1", 0, 0, 0.5),
        ("2^3^2", 0, 0, 512.0),
        ("8 / 4 / 2", 0, 0, 1.0),
        ("8 - 4 - 2", 0, 0, 2.0),
        ("-y*z", 2.0, 3.0, -6.0),
        ("abs(-3) + sqrt(16)", 0, 0, 7.0),
        ("1.5e1 + .5", 0, 0, 15.5),
    ],
)
def test_examples(src, y, z, expected):
    assert ex.evaluate(ex.parse(src), y, z) == pytest.approx(expected, abs=1e-15)


def test_evaluate_broadcasts_over_arrays():
    e = ex.parse("y + 10*z")
    out = ex.evaluate(e, np.array([0.0, 1.0]), 2.0)
    assert isinstance(out, np.ndarray)
    np.testing.assert_array_equal(out, [20.0, 21.0])
    assert isinstance(ex.evaluate(e, 1.0, 2.0), float)


@pytest.mark.parametrize("src, y", [("1/y", 0.0), ("sqrt(y - 1)", 0.5), ("exp(1000*y)", 1.0)])
def test_non_finite_results_raise(src, y):
    with pytest.raises(EvaluationError):
        ex.evaluate(ex.parse(src), y, 0.0)


@pytest.mark.parametrize(
    "src, cls, offset",
    [
        ("1 + * 2", ExprSyntaxError, 4),
        ("(1 + 2", ExprSyntaxError, 6),
        ("1 $ 2", ExprSyntaxError, 2),
        ("", ExprSyntaxError, 0),
        ("x + 1", UnknownIdentifierError, 0),
        ("2 * foo(y)", UnknownIdentifierError, 4),
        ("sin(y, z)", ArityError, 0),
        ("cos()", ArityError, 0),
        ("1e999", ExprSyntaxError, 0),
        ("1 2", ExprSyntaxError, 2),
    ],
)
def test_syntax_errors_carry_byte_offset(src, cls, offset):
    with pytest.raises(cls) as info:
        ex.parse(src)
    assert info.value.offset == offset


def test_offset_counts_bytes_not_characters():
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse("y + é")
    assert info.value.offset == 4
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse("é")
    assert info.value.offset == 0


def test_helpers():
    e = ex.parse("cos(2*pi*y) * z")
    assert ex.variables(e) == {"y", "z"}
    assert ex.is_constant(ex.parse("2*pi + sqrt(2)"))
    assert not ex.is_constant(e)


# ------------------------------------------------------------ properties

_leaf = st.one_of(
    st.floats(min_value=-1e3, max_value=1e3, allow_nan=False).map(ex.Const),
    st.sampled_from(["y", "z"]).map(ex.Var),
)
_trees = st.recursive(
    _leaf,
    lambda sub: st.one_of(
        st.builds(ex.Unary, st.sampled_from(ex.UNARY_OPS), sub),
        st.builds(ex.Binary, st.sampled_from(list(ex.BINARY_OPS.values())), sub, sub),
    ),
    max_leaves=12,
)
_points = st.floats(min_value=-2, max_value=2, allow_nan=False)


def _outcome(e, y, z):
    try:
        return ex.evaluate(e, y, z)
    except EvaluationError:
        return "error"


@given(_trees, _points, _points)
def test_print_parse_round_trip_is_bit_exact(e, y, z):
    again = ex.parse(ex.to_string(e))
    a, b = _outcome(e, y, z), _outcome(again, y, z)
    if a == "error":
        assert b == "error"
    else:
        assert b != "error" and math.copysign(1, a) == math.copysign(1, b) and a == b


@given(_trees, _trees, _trees)
def test_multiplication_binds_tighter_than_addition(a, b, c):
    sa, sb, sc = (ex.to_string(t) for t in (a, b, c))
    assert ex.parse(f"{sa}+{sb}*{sc}") == ex.parse(f"{sa}+({sb}*{sc})")


@given(_trees, _points, _points)
def test_jit_source_matches_evaluator(e, y, z):
    expected = _outcome(e, y, z)
    try:
        got = float(eval(ex.to_source(e), {"math": math, "abs": abs, "y": y, "z": z}))
    except (ZeroDivisionError, ValueError, OverflowError):
        got = "error"
    if isinstance(got, float) and not math.isfinite(got):
        got = "error"
    if "error" in (expected, got):
        return  # Python raises on 1/0 and overflow where IEEE arithmetic carries inf
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)
