import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroboot.errors import EvalError, ParseError
from neuroboot.expr import BinOp, Call, Const, Expression, Neg, Var, evaluate, parse, to_string


def test_diffusion_coefficient_at_origin():
    e = parse("y^2*log(x+2)+4")
    assert evaluate(e, (0.0, 0.0, 0.0)) == 4.0


def test_precedence():
    assert evaluate(parse("2+3*4"), (0, 0, 0)) == 14.0


def test_dangling_operator_offset():
    with pytest.raises(ParseError) as exc:
        parse("2*+")
    assert exc.value.offset == 2


@pytest.mark.parametrize(
    "source, offset",
    [
        ("foo(x)", 0),
        ("x + q", 4),
        ("(x+1", 0),
        ("x+1)", 3),
        ("sin x", 4),
        ("x*", 2),
        ("", 0),
        ("1 $ 2", 2),
    ],
)
def test_parse_errors_report_offset(source, offset):
    with pytest.raises(ParseError) as exc:
        parse(source)
    assert exc.value.offset == offset


def test_offsets_are_bytes():
    # 'é' is two bytes in UTF-8
    with pytest.raises(ParseError) as exc:
        parse("1 + é")
    assert exc.value.offset == 4


def test_solution_expression_value():
    e = parse("cos(x)*sin(y)")
    assert abs(evaluate(e, (0.0, 1.5707963267948966, 0.0)) - 1.0) <= 1e-12


def test_exp_at_origin():
    assert evaluate(parse("exp(z)"), (0, 0, 0)) == 1.0


@pytest.mark.parametrize(
    "source, point",
    [
        ("log(x+2)", (-2.0, 0.0, 0.0)),
        ("1/x", (0.0, 1.0, 1.0)),
        ("x^-1", (0.0, 0.0, 0.0)),
        ("x^0.5", (-1.0, 0.0, 0.0)),
        ("sqrt(x)", (-0.25, 0.0, 0.0)),
        ("exp(1000*x)", (1.0, 0.0, 0.0)),
    ],
)
def test_domain_violations_raise(source, point):
    with pytest.raises(EvalError) as exc:
        evaluate(parse(source), point)
    assert exc.value.point is not None


def test_negative_base_integer_exponent_is_fine():
    assert evaluate(parse("x^3"), (-2.0, 0, 0)) == -8.0


def test_associativity_and_unary_minus():
    p = (2.0, 3.0, 0.0)
    assert evaluate(parse("2^3^2"), p) == 512.0
    assert evaluate(parse("-x^2"), p) == -4.0
    assert evaluate(parse("8/4/2"), p) == 1.0
    assert evaluate(parse("x-y-1"), p) == -2.0
    assert evaluate(parse("x^-1"), p) == 0.5
    assert evaluate(parse("--x"), p) == 2.0


def test_constants_and_functions():
    p = (0.0, 0.0, 0.0)
    assert evaluate(parse("pi"), p) == math.pi
    assert evaluate(parse("e"), p) == math.e
    assert evaluate(parse("abs(-3)+tanh(0)+sqrt(4)"), p) == 5.0


def test_vectorized_evaluation_matches_pointwise():
    e = parse("y^2*log(x+2)+4")
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, size=(50, 3))
    vec = e(pts)
    assert vec.shape == (50,)
    assert np.array_equal(vec, [e(p) for p in pts])


def test_constant_expression_broadcasts():
    out = parse("3")(np.zeros((4, 3)))
    assert out.shape == (4,) and np.all(out == 3.0)


def test_expression_is_immutable():
    e = parse("x")
    with pytest.raises(AttributeError):
        e.ast = Const(1.0)


# --------------------------------------------------------------------------
# round trip: random trees

_leaf = st.one_of(
    st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False).map(Const),
    st.sampled_from(["x", "y", "z"]).map(Var),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^"]), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "tanh", "abs"]), children).map(
            lambda t: Call(*t)
        ),
    )


_trees = st.recursive(_leaf, _extend, max_leaves=12)


def _depth(node):
    if isinstance(node, (Const, Var)):
        return 1
    if isinstance(node, Neg):
        return 1 + _depth(node.operand)
    if isinstance(node, Call):
        return 1 + _depth(node.arg)
    return 1 + max(_depth(node.left), _depth(node.right))


def _eval_or_error(expr, p):
    try:
        return evaluate(expr, p)
    except EvalError:
        return "error"


@settings(max_examples=1000, deadline=None)
@given(_trees, st.integers(0, 2**32 - 1))
def test_print_parse_round_trip_is_bit_exact(tree, seed):
    if _depth(tree) > 6:
        return
    original = Expression(tree)
    reparsed = parse(to_string(original))
    rng = np.random.default_rng(seed)
    for p in rng.uniform(-2, 2, size=(10, 3)):
        a, b = _eval_or_error(original, p), _eval_or_error(reparsed, p)
        if a == "error" or b == "error":
            assert a == b
        else:
            assert np.float64(a).tobytes() == np.float64(b).tobytes()


def test_pretty_printer_uses_minimal_parentheses():
    assert to_string(parse("(x+1)*(y-2)")) == "(x+1)*(y-2)"
    assert to_string(parse("-x^2")) == "-x^2"
    assert to_string(parse("(-x)^2")) == "(-x)^2"
    assert to_string(parse("x-(y-z)")) == "x-(y-z)"


def test_evaluation_is_thread_safe():
    e = parse("sin(x)*exp(y)+z^2")
    pts = np.random.default_rng(0).uniform(-1, 1, size=(2000, 3))
    ref = e(pts)
    results = []

    def work():
        results.append(e(pts))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(r, ref) for r in results)
