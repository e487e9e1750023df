import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symlab.expr import ExprError, Expression, direction_function, matrix_function, point_function


def test_arithmetic_and_functions():
    e = Expression("2*x + sin(pi/2) - exp(0)/4 + cos(y)*-1", ("x", "y"))
    assert e(x=1.0, y=0.0) == pytest.approx(2 + 1 - 0.25 - 1)
    assert Expression("e")() == pytest.approx(np.e)
    assert np.allclose(Expression("x*x", ("x",))(x=np.arange(3.0)), [0, 1, 4])


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_matches_python_arithmetic(a, b):
    e = Expression("(a - b) * (a + b) / 2 + +a", ("a", "b"))
    assert e(a=a, b=b) == pytest.approx((a - b) * (a + b) / 2 + a, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize(
    "source",
    ["x**2", "__import__('os')", "x.real", "z + 1", "sqrt(x)", "sin(x, x)", "[x]", "'a'", "x if x else 1", "1 +", "True"],
)
def test_rejects_outside_grammar(source):
    with pytest.raises(ExprError):
        Expression(source, ("x",))


def test_division_by_zero_is_reported():
    with pytest.raises(ExprError):
        Expression("1/x", ("x",))(x=0.0)
    with pytest.raises(ExprError):
        Expression("x", ("x",))()


def test_point_matrix_direction_functions():
    f = point_function("x + 2*y", 2)
    assert np.allclose(f(np.array([[1.0, 2.0], [0.0, 1.0]])), [5.0, 2.0])
    assert np.allclose(point_function("3", 1)(np.zeros((4, 1))), 3.0)
    G = matrix_function([["1 + x", "0"], ["0", "exp(y)"]], 2)(np.array([[1.0, 0.0]]))
    assert G.shape == (1, 2, 2) and np.allclose(G[0], [[2, 0], [0, 1]])
    with pytest.raises(ExprError):
        matrix_function([["1"]], 2)
    g1 = direction_function("1 + 0.5*s", 1)
    assert np.allclose(g1(np.array([[-1.0], [1.0]])), [0.5, 1.5])
    g2 = direction_function("cos(theta)", 2)
    assert np.allclose(g2(np.array([[0.0, 1.0], [1.0, 0.0]])), [0.0, 1.0], atol=1e-15)
