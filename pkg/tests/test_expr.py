import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from aimsolve.algebra import EnergyPoly, XSeries
from aimsolve.errors import (
    LexError,
    ModelFileError,
    ParseError,
    SingularCoefficient,
    UnboundVariable,
)
from aimsolve.expr import (
    Add,
    Div,
    Mul,
    Neg,
    Num,
    Pow,
    Sub,
    Token,
    Var,
    eval_series,
    load_model,
    numeric,
    parse,
    parse_model,
    tokenize,
)
from aimsolve.models import RabiParams, rabi_coefficients

RABI = """\
# Rabi system in the Bargmann variable
param kappa = 0.5
param omega0 = 0
param s = 0.7071067811865476 * kappa
a0 = x*(2*E - 1 + kappa^2 - 2*omega0)/(2*x^2 - kappa^2)
b0 = s*(1 - 2*E - 2*x^2 - 2*omega0)/(2*x^2 - kappa^2)
c0 = x*(2*E - 1 + kappa^2 + 2*omega0)/(2*x^2 - kappa^2)
d0 = s*(1 - 2*E - 2*x^2 + 2*omega0)/(2*x^2 - kappa^2)   # trailing comment
"""


def rel_close(s, t, tol=1e-12):
    a, b = s.terms, t.terms
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


def texts(tokens):
    return [t.value if t.kind == "num" else t.text for t in tokens]


# ------------------------------------------------------------------ lexer


def test_tokenize_examples():
    assert texts(tokenize("2*x^2 - kappa^2")) == [2.0, "*", "x", "^", 2.0, "-", "kappa", "^", 2.0]
    assert texts(tokenize("1e-3")) == [0.001]
    assert texts(tokenize(".5 + 3.")) == [0.5, "+", 3.0]
    with pytest.raises(LexError) as err:
        tokenize("x $ E")
    assert err.value.pos == 2


def test_lex_offsets_are_bytes():
    with pytest.raises(LexError) as err:
        tokenize("é + $")
    assert err.value.pos == 0
    with pytest.raises(LexError) as err:
        tokenize("x·y")
    assert err.value.pos == 1
    tok = tokenize("ab + 1")
    assert tok[1] == Token("op", "+", 3)


# ----------------------------------------------------------------- parser


def test_parse_precedence():
    a, b, c, x = Var("a"), Var("b"), Var("c"), Var("x")
    assert parse("a+b*c") == Add(a, Mul(b, c))
    assert parse("-x^2") == Neg(Pow(x, 2))
    assert parse("a-b-c") == Sub(Sub(a, b), c)
    assert parse("a/b/c") == Div(Div(a, b), c)
    assert parse("(a+b)*c") == Mul(Add(a, b), c)
    assert parse("x^2^3") == Pow(x, 8)
    assert parse("2*-x") == Mul(Num(2.0), Neg(x))


@pytest.mark.parametrize("text", ["((x)", "x)", "x +", "* x", "x ^ 2.5", "x ^ y", "x ^ -1", "", "x x", "x^100"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse("(x + 1")
    assert err.value.pos is not None


# ------------------------------------------------------------- evaluation


def test_eval_series_examples():
    assert eval_series(parse("E"), {}, 0.0, 3) == XSeries.constant(EnergyPoly([0, 1]), 3)
    with pytest.raises(SingularCoefficient):
        eval_series(parse("1/x"), {}, 0.0, 4)
    with pytest.raises(SingularCoefficient):
        eval_series(parse("1/(E + x)"), {}, 0.0, 4)
    with pytest.raises(UnboundVariable):
        eval_series(parse("kappa*x"), {}, 0.0, 4)
    s = eval_series(parse("1/x"), {}, 2.0, 4)
    assert s.value(2.1, 0.0) == pytest.approx(1 / 2.1, rel=1e-6)


def test_eval_series_matches_builder():
    s = eval_series(parse("x*(2*E-1+kappa^2)/(2*x^2-kappa^2)"), {"kappa": 1.0}, 0.0, 4)
    ref = rabi_coefficients(RabiParams(0.0, 1.0), 4).a0
    assert s.allclose(ref, atol=1e-12)


def test_numeric():
    f = numeric(parse("x^2 + k*E"), {"k": 2.0})
    np.testing.assert_allclose(f(np.array([1.0, 2.0]), 3.0), [7.0, 10.0])
    with pytest.raises(UnboundVariable):
        numeric(parse("q"))


# --------------------------------------------------------- property suites


def leaves():
    return st.one_of(
        st.floats(0.5, 2.0).map(Num),
        st.just(Var("x")),
        st.just(Var("E")),
        st.just(Var("k")),
    )


def extend(children):
    binary = st.sampled_from([Add, Sub, Mul])
    # denominators stay away from zero near x0 = 0: c + x * (something)
    safe_den = st.tuples(st.floats(2.0, 4.0), children).map(
        lambda t: Add(Num(t[0]), Mul(Var("x"), t[1]))
    )
    return st.one_of(
        st.tuples(binary, children, children).map(lambda t: t[0](t[1], t[2])),
        children.map(Neg),
        st.tuples(children, st.integers(0, 3)).map(lambda t: Pow(*t)),
        st.tuples(children, safe_den).map(lambda t: Div(*t)),
    )


asts = st.recursive(leaves(), extend, max_leaves=8)


@pytest.mark.property
@settings(max_examples=150, deadline=None)
@given(asts, st.floats(-0.05, 0.05), st.floats(-2.0, 2.0))
def test_series_round_trip(ast, x, e):
    env = {"k": 1.3}
    try:
        s = eval_series(ast, env, 0.0, 30)
    except SingularCoefficient:
        # an E-dependent denominator: rejected by design
        assume(False)
    want = float(numeric(ast, env)(x, e))
    assume(np.isfinite(want))
    got = s.value(x, e)
    scale = max(1.0, float(np.max(np.abs(s.at_energy(e)))))
    assert abs(got - want) <= 1e-9 * max(abs(want), 1e-3 * scale)


token_pool = [Token("num", "1", 0, 1.0), Token("num", "2.5", 0, 2.5), Token("name", "x", 0),
              Token("name", "E", 0)] + [Token("op", c, 0) for c in "+-*/^()"]


@pytest.mark.property
@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(token_pool), max_size=15))
def test_parser_totality(tokens):
    tokens = [Token(t.kind, t.text, i, t.value) for i, t in enumerate(tokens)]
    try:
        parse(tokens)
    except ParseError:
        pass


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="xE12.+-*/^() k$", max_size=20))
def test_parse_text_totality(text):
    try:
        parse(text)
    except (ParseError, LexError):
        pass


# ------------------------------------------------------------- model files


def test_model_matches_builder():
    spec = parse_model(RABI, "rabi.model")
    assert spec.params["s"] == pytest.approx(0.5 / np.sqrt(2))
    c = spec.coefficients(30)
    ref = rabi_coefficients(RabiParams(0.0, 0.5), 30)
    for a, b in zip(c.series(), ref.series()):
        assert rel_close(a, b)
    assert c.exact.poles_in(-1, 1, np.linspace(-1, 1, 201)) == pytest.approx([-0.35355339, 0.35355339], abs=1e-6)


def test_model_overrides():
    spec = parse_model(RABI).with_params(kappa=1.0, s=0.7071067811865476)
    ref = rabi_coefficients(RabiParams(0.0, 1.0), 10)
    assert rel_close(spec.coefficients(10).b0, ref.b0)
    with pytest.raises(ModelFileError):
        parse_model(RABI).with_params(nope=1.0)


def model_error(text):
    with pytest.raises(ModelFileError) as err:
        parse_model(text, "m.txt")
    return err.value


def test_model_file_errors():
    full = "a0 = x\nb0 = 1\nc0 = 1\nd0 = 1\n"
    assert "missing" in str(model_error(""))
    e = model_error("a0 = x\nb0 = (1\nc0 = 1\nd0 = 1\n")
    assert e.line == 2 and "m.txt:2:" in str(e)
    assert model_error("a0 = x $ 1\n" + full[7:]).line == 1
    assert model_error(full + "a0 = 2\n").line == 5
    assert model_error(full + "y0 = 2\n").line == 5
    assert model_error("param x = 1\n" + full).line == 1
    assert model_error("param k = q\n" + full).line == 1
    assert model_error(full.replace("b0 = 1", "b0 = q")).line == 2
    assert model_error(full + "garbage\n").line == 5


def test_model_singular_at_x0():
    spec = parse_model("a0 = 1/x\nb0 = 1\nc0 = 1\nd0 = 1\n", "m.txt")
    with pytest.raises(ModelFileError) as err:
        spec.coefficients(10)
    assert err.value.line == 1 and "SingularCoefficient" in str(err.value)
    shifted = parse_model("x0 = 1\na0 = 1/x\nb0 = 1\nc0 = 1\nd0 = 1\n")
    assert shifted.coefficients(5).x0 == 1.0


def test_load_model(tmp_path):
    p = tmp_path / "rabi.model"
    p.write_text(RABI)
    assert load_model(p).coefficients(8).label == "rabi"
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.model")
