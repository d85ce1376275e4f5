import math

import numpy as np
import pytest

from condbm.expr import ExpressionError, compile_expr, eval_array, eval_scalar


@pytest.mark.parametrize("text,f", [
    ("-x", lambda x: -x),
    ("-2*x + 1", lambda x: -2 * x + 1),
    ("-x - 0.3*tanh(x)", lambda x: -x - 0.3 * math.tanh(x)),
    ("-(x - 1)/2", lambda x: -(x - 1) / 2),
    ("exp(-x*x)", lambda x: math.exp(-x * x)),
    ("-x*x*x", lambda x: -x ** 3),
    ("1e-3 - x", lambda x: 1e-3 - x),
])
def test_scalar_and_array_agree_with_python(text, f):
    prog = compile_expr(text)
    xs = np.linspace(-3, 3, 25)
    ref = np.array([f(x) for x in xs])
    assert np.allclose(eval_array(prog, xs), ref, rtol=1e-15, atol=1e-15)
    assert [eval_scalar(prog, x) for x in xs] == pytest.approx(list(ref), rel=1e-15, abs=1e-15)


def test_negated():
    p = compile_expr("-x + 2").negated()
    assert eval_scalar(p, 1.0) == -1.0


@pytest.mark.parametrize("bad", ["__import__('os')", "x**2", "sin(x)", "y", "x +", "lambda: 1", "x if x else 1",
                                 "abs(x)", "[x]"])
def test_rejects_unsupported(bad):
    with pytest.raises(ExpressionError):
        compile_expr(bad)


def test_depth_limit():
    text = "x" + "+x" * 5
    compile_expr(text)
    # right nesting keeps every left operand on the stack
    deep = "x+(" * 40 + "x" + ")" * 40
    with pytest.raises(ExpressionError, match="deep"):
        compile_expr(deep)


def test_division_by_zero_follows_ieee():
    p = compile_expr("1/x")
    assert eval_scalar(p, 0.0) == math.inf
    assert eval_scalar(p, -0.0) == -math.inf
    with np.errstate(divide="ignore"):
        assert eval_array(p, np.array([0.0]))[0] == math.inf
