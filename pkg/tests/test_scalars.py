"""Scalar field: canonical forms, ring axioms, series, q-combinatorics."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasitwist.errors import DivisionByZero, PoleHit, TruncationUnderflow, UnassignedParam
from quasitwist.scalars import (
    EpsSeries,
    Param,
    ParamContext,
    Scalar,
    geometric_series,
    q_factorial,
    q_int,
    scalar_arith,
)


@pytest.fixture
def ctx():
    return ParamContext.make(q="multiplicative", w="multiplicative", u="multiplicative")


def test_constants_and_equality(ctx):
    q = ctx.var("q")
    assert (q - q).is_zero()
    assert scalar_arith(q, -q, "add").is_zero()
    assert ctx.const(Fraction(2, 3)) + ctx.const(Fraction(1, 3)) == ctx.one
    assert (q / q).is_one()


def test_division_by_zero(ctx):
    with pytest.raises(DivisionByZero):
        scalar_arith(ctx.one, ctx.zero, "div")


def test_fraction_cancellation(ctx):
    q = ctx.var("q")
    # (q^2 - 1)/(q - 1) == q + 1
    s = (q * q - 1) / (q - 1)
    assert s == q + 1
    # denominators are normalized monic and monomial-free
    s2 = ctx.one / (q * q - q)
    assert s2 * (q * q - q) == ctx.one


def test_laurent_exponents(ctx):
    q = ctx.var("q")
    qinv = ctx.var("q", -1)
    assert q * qinv == ctx.one
    assert (q ** 3) * (q ** -5) == ctx.var("q", -2)
    # classical limit of a q-integer by cancellation, then substitution
    n = 4
    s = (q ** n - q ** -n) / (q - qinv)
    val = s.subs({"q": ctx.one})
    assert val == ctx.const(n)


def test_canonical_idempotence(ctx):
    q, w = ctx.var("q"), ctx.var("w")
    s = (q * w - w) / (q * q - 1) + 3 / (w + 1)
    again = Scalar(ctx, s.cont, dict(s.num), dict(s.den))
    assert again == s and again.num == s.num and again.den == s.den and again.cont == s.cont


def test_evaluate_and_poles(ctx):
    q = ctx.var("q")
    s = (q + 1) / (q - 1)
    assert abs(s.evaluate({"q": 3.0, "w": 1, "u": 1}) - 2.0) < 1e-14
    with pytest.raises(PoleHit):
        s.evaluate({"q": 1.0, "w": 1, "u": 1})
    with pytest.raises(UnassignedParam):
        s.evaluate({"w": 1, "u": 1})


def test_exp_of_linear_log_atoms():
    ctx = ParamContext.make(t="log", exp_t="multiplicative", u="multiplicative")
    t = ctx.var("t")
    z = (t + t).exp_of_linear()
    assert z == ctx.var("exp_t", 2)
    assert ctx.zero.exp_of_linear().is_one()
    half = ctx.const(Fraction(-1, 2)) * t
    assert half.exp_of_linear() == ctx.monomial({"exp_t": Fraction(-1, 2)})


_small = st.integers(min_value=-3, max_value=3)


@st.composite
def scalars(draw, ctx):
    q, w = ctx.var("q"), ctx.var("w")
    num = ctx.const(draw(_small)) + ctx.const(draw(_small)) * q + ctx.const(draw(_small)) * w
    den_choice = draw(st.integers(min_value=0, max_value=2))
    den = [ctx.one, ctx.one + q, ctx.const(2) + q * w][den_choice]
    return num / den


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_ring_axioms(data):
    ctx = ParamContext.make(q="multiplicative", w="multiplicative", u="multiplicative")
    a = data.draw(scalars(ctx))
    b = data.draw(scalars(ctx))
    c = data.draw(scalars(ctx))
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + b == b + a
    assert a * b == b * a


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_canonical_matches_sympy(data):
    sympy = pytest.importorskip("sympy")
    ctx = ParamContext.make(q="multiplicative", w="multiplicative", u="multiplicative")
    a = data.draw(scalars(ctx))
    b = data.draw(scalars(ctx))
    q, w = sympy.symbols("q w")

    def to_sympy(s):
        def side(p):
            return sum(
                sympy.Rational(v) * q ** sympy.Integer(k[0]) * w ** sympy.Integer(k[2])
                for k, v in p.items()
            )

        return sympy.cancel(sympy.Rational(s.cont) * side(s.num) / side(s.den))

    lhs = to_sympy(a * b + a)
    rhs = sympy.cancel(to_sympy(a) * to_sympy(b) + to_sympy(a))
    assert sympy.simplify(lhs - rhs) == 0


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def test_geometric_series_identity(ctx):
    # (1 - t) * sum_{i<=N} t^i == 1 - t^{N+1}, at each used order
    q = ctx.var("q")
    for order in (1, 2, 3, 4):
        t = EpsSeries({1: q}, order)  # t = eps*q
        inv = geometric_series(t, ctx.one)
        for d in range(order + 1):
            assert inv.coeff(d, ctx.zero) == q ** d
        one = EpsSeries({0: ctx.one}, order)
        prod = (one - t) * inv
        assert prod.coeffs == {0: ctx.one}


def test_series_truncation_metadata(ctx):
    q = ctx.var("q")
    a = EpsSeries({0: ctx.one, 3: q}, 3)
    b = EpsSeries({0: ctx.one, 1: q}, 2)
    prod = a * b
    assert prod.order == 2
    assert prod.dropped  # the q*eps^3-and-above part fell off
    with pytest.raises(TruncationUnderflow):
        prod[3]


def test_psi2_denominator_expansion(ctx):
    # prod_{a=0}^{1} (1 - q^a * eps * w) = 1 - (1+q) eps w + q eps^2 w^2
    q, w = ctx.var("q"), ctx.var("w")
    order = 4
    one = EpsSeries({0: ctx.one}, order)
    prod = one
    for a in range(2):
        prod = prod * (one - EpsSeries({1: q ** a * w}, order))
    assert prod.coeff(0, ctx.zero) == ctx.one
    assert prod.coeff(1, ctx.zero) == -(ctx.one + q) * w
    assert prod.coeff(2, ctx.zero) == q * w * w
    assert prod.coeff(3, ctx.zero).is_zero()


def test_series_inverse_of_scalar_leading(ctx):
    q = ctx.var("q")
    s = EpsSeries({0: ctx.const(2), 1: q}, 3)
    inv = s.inverse(ctx.one)
    assert (s * inv).coeffs == {0: ctx.one}


# ---------------------------------------------------------------------------
# q-combinatorics
# ---------------------------------------------------------------------------


def test_q_factorial_basics(ctx):
    q = ctx.var("q")
    assert q_factorial(0, q) == ctx.one
    assert q_factorial(1, q) == ctx.one
    assert q_factorial(2, q) == ctx.one + q
    assert q_int(3, q) == ctx.one + q + q * q


@pytest.mark.parametrize("n", range(7))
def test_q_factorial_classical_limit(ctx, n):
    q = ctx.var("q")
    import math

    val = q_factorial(n, q).subs({"q": ctx.one})
    assert val == ctx.const(math.factorial(n))


def test_q_factorial_symmetric_convention(ctx):
    q = ctx.var("q")
    s = q_int(3, q, convention="symmetric")
    assert s == (q ** 3 - q ** -3) / (q - q ** -1)
