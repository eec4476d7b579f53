import numpy as np
import pytest

from fcs_forge.expressions import ExpressionError, parse, render

ENV = {
    "age": np.array([55.0, 70.0, 82.0]),
    "female": np.array([1.0, 0.0, 1.0]),
    "Y5": np.array([100.0, 0.0, 50.0]),
    "Y6": np.array([0.0, 20.0, 0.0]),
    "country": np.array(["DE", "IT", "AT"], dtype=object),
}


def ev(text, **kw):
    return parse(text).evaluate(ENV, 3, **kw)


def test_render_placeholders():
    assert render("mat_{h} == 1 and kid_{h-1} > 0", 2) == "mat_2 == 1 and kid_1 > 0"
    assert render("Y2_{h+1}", 3) == "Y2_4"


@pytest.mark.parametrize("text,expected", [
    ("age ** 2 / 100", [30.25, 49.0, 67.24]),
    ("min(65, age)", [55.0, 65.0, 65.0]),
    ("max(age, 60, 75)", [75.0, 75.0, 82.0]),
    ("log1p(Y5 + Y6)", np.log1p([100.0, 20.0, 50.0])),
    ("where(female == 1, Y5, -1)", [100.0, -1.0, 50.0]),
    ("-age + 1", [-54.0, -69.0, -81.0]),
    ("2", [2.0, 2.0, 2.0]),
])
def test_arithmetic(text, expected):
    np.testing.assert_allclose(ev(text), expected)


@pytest.mark.parametrize("text,expected", [
    ("female == 1 and age > 60", [False, False, True]),
    ("female == 1 or Y6 > 0", [True, True, True]),
    ("not female == 1", [False, True, False]),
    ("60 <= age < 80", [False, True, False]),
    ("country in ['DE', 'AT']", [True, False, True]),
    ("country not in ['DE']", [False, True, True]),
])
def test_logic(text, expected):
    np.testing.assert_array_equal(ev(text), expected)


def test_raw_functions_receive_names():
    seen = []

    def seqmean(name):
        seen.append(name)
        return np.ones(3)

    expr = parse("log1p(seqmean(Y2))")
    assert "@seqmean:Y2" in expr.names and "seqmean" in expr.calls
    np.testing.assert_allclose(expr.evaluate(ENV, 3, {"seqmean": seqmean}), np.log1p(1.0))
    assert seen == ["Y2"]


def test_names_and_is_name():
    assert parse("Y5").is_name and not parse("inf").is_name
    assert parse("Y5 + Y6 * age").names == {"Y5", "Y6", "age"}


@pytest.mark.parametrize("text", [
    "__import__('os')",
    "age.real",
    "age if female else 0",
    "[age]",
    "age in Y5",
    "lambda: 1",
    "f(x=1)",
    "age +",
])
def test_rejected_syntax(text):
    with pytest.raises(ExpressionError):
        parse(text)


def test_runtime_errors():
    with pytest.raises(ExpressionError, match="unknown column"):
        ev("missing + 1")
    with pytest.raises(ExpressionError, match="unknown function"):
        ev("seqmean(Y2)")
    with pytest.raises(ExpressionError, match="unknown function"):
        parse("mean(age)")
    with pytest.raises(ExpressionError, match="shape"):
        parse("age").evaluate({"age": np.ones(2)}, 3)
