import math
import random
import struct
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refine_dp.exact_arith import BigFloat
from refine_dp.float_grid import (
    BINARY64,
    FloatDecomposition,
    ToyGrid,
    decompose,
    is_on_grid_multiple,
    lowest_set_bit_exponent,
    next_float_up,
    recompose,
    ulp,
)

finite_floats = st.floats(allow_nan=False, allow_infinity=False)


def test_ulp_examples():
    assert ulp(1.0) == 2.0**-52
    assert ulp(1 - 2.0**-53) == 2.0**-53
    assert ulp(3.0) == 2.0**-51


def test_ulp_subnormal_and_errors():
    assert ulp(5e-324) == 2.0**-1074
    assert ulp(-2.0**-1030) == 2.0**-1074
    for bad in (0.0, -0.0, math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            ulp(bad)


@given(finite_floats.filter(lambda x: x != 0))
def test_ulp_matches_stdlib(x):
    assert ulp(x) == math.ulp(x)


def test_decompose_examples():
    assert decompose(1.0) == FloatDecomposition(0, 1023, 0)
    assert decompose(1 - 2.0**-53) == FloatDecomposition(0, 1022, (1 << 52) - 1)
    assert decompose(0.0) == FloatDecomposition(0, 0, 0)


def test_decomposition_validates_fields():
    with pytest.raises(ValueError):
        FloatDecomposition(2, 0, 0)
    with pytest.raises(ValueError):
        FloatDecomposition(0, 2048, 0)
    with pytest.raises(ValueError):
        FloatDecomposition(0, 0, 1 << 52)


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_recompose_is_bitwise_identity(bits):
    x = struct.unpack("<d", struct.pack("<Q", bits))[0]
    y = recompose(decompose(x))
    assert struct.pack("<d", y) == struct.pack("<d", x)


@given(st.floats(min_value=2.0**-1022, max_value=1e308))
def test_normal_value_formula(x):
    d = decompose(x)
    value = (1 + Fraction(d.mantissa, 1 << 52)) * Fraction(2) ** (d.exponent - 1023)
    assert value == Fraction(x)


def test_next_float_up_examples():
    assert next_float_up(BigFloat(1)) == 1.0
    assert next_float_up(BigFloat((1 << 60) + 1, -60)) == 1 + 2.0**-52
    assert next_float_up(-BigFloat((1 << 60) + 1, -60)) == -1.0


def test_next_float_up_infinities_and_saturation():
    big = BigFloat.from_float(1.7976931348623157e308) + BigFloat(1)
    assert next_float_up(big) == math.inf
    assert next_float_up(BigFloat.infinity(1)) == math.inf
    assert next_float_up(-big) == -math.inf
    assert next_float_up(-big, saturate=True) == -1.7976931348623157e308
    assert next_float_up(BigFloat.infinity(-1)) == -math.inf
    with pytest.raises(ValueError):
        next_float_up(math.nan)


def test_next_float_up_tiny_values():
    assert next_float_up(BigFloat(1, -1100)) == 5e-324
    assert next_float_up(BigFloat(-1, -1100)) == 0.0
    assert math.copysign(1, next_float_up(BigFloat(-1, -1100))) == 1


def _ceil_oracle(q: Fraction) -> float:
    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f + 0.0


@given(st.integers(min_value=-(2**80), max_value=2**80), st.integers(min_value=-1100, max_value=40))
def test_next_float_up_is_ceiling(man, exp):
    v = BigFloat(man, exp)
    assert next_float_up(v) == _ceil_oracle(v.to_fraction())


def test_next_float_up_monotone():
    rng = random.Random(7)
    for _ in range(100_000):
        e = rng.randint(-80, 40)
        v = BigFloat(rng.getrandbits(70) - (1 << 69), e)
        w = v + BigFloat(rng.getrandbits(40) + 1, e - rng.randint(0, 40))
        assert next_float_up(v) <= next_float_up(w)


def test_is_on_grid_multiple_examples():
    assert is_on_grid_multiple(0.5, -53)
    assert is_on_grid_multiple(3 * 2.0**-53, -53)
    assert not is_on_grid_multiple(2.0**-54, -53)
    assert is_on_grid_multiple(0.0, 10)


@given(finite_floats, st.integers(min_value=-1100, max_value=1100))
def test_is_on_grid_multiple_matches_rationals(x, k):
    q = Fraction(x) / Fraction(2) ** k
    assert is_on_grid_multiple(x, k) == (q.denominator == 1)


@given(st.floats(min_value=2.0**-1022, max_value=1e308), st.booleans())
def test_normal_values_on_ulp_grid(x, neg):
    x = -x if neg else x
    k = math.floor(math.log2(abs(x)))
    if 2.0**k > abs(x):
        k -= 1
    assert is_on_grid_multiple(x, k - 52)


def test_lowest_set_bit_exponent():
    assert lowest_set_bit_exponent(1.0) == 0
    assert lowest_set_bit_exponent(0.75) == -2
    assert lowest_set_bit_exponent(5e-324) == -1074
    with pytest.raises(ValueError):
        lowest_set_bit_exponent(0.0)


def test_binary64_grid_contract():
    assert BINARY64.round_up(BigFloat(1)) == 1.0
    assert BINARY64.predecessor(1.0) == 1 - 2.0**-53
    assert BINARY64.predecessor(0.0) == -5e-324
    assert BINARY64.size() == 2**64 - 2**53 + 1
    with pytest.raises(OverflowError):
        BINARY64.enumerate()


@given(st.integers(min_value=-(2**70), max_value=2**70), st.integers(min_value=-120, max_value=10))
def test_binary64_preimage_bracket(man, exp):
    x = BigFloat(man, exp)
    s = BINARY64.round_up(x)
    assert Fraction(BINARY64.predecessor(s)) < x.to_fraction() <= Fraction(s)


def test_toy_grid_exhaustive_consistency():
    g = ToyGrid([Fraction(-3, 2), -1, Fraction(-1, 4), 0, Fraction(1, 8), Fraction(1, 2), 1, 2])
    pts = g.points
    assert g.size() == 9
    for p in pts:
        assert g.round_up(p) == p
    for lo, hi in zip(pts, pts[1:]):
        mid = (lo + hi).scale2(-1)
        assert g.round_up(mid) == hi
        assert g.predecessor(g.round_up(mid)) < mid <= g.round_up(mid)
    assert g.round_up(BigFloat(3)) == g.top
    assert g.predecessor(g.top) == pts[-1]
    assert g.round_up(BigFloat(-5)) == pts[0]
    assert g.predecessor(pts[0]) == BigFloat.infinity(-1)


def test_toy_grid_round_up_monotone():
    g = ToyGrid.minifloat(2, 1)
    xs = sorted(BigFloat(n, -3) for n in range(-60, 61))
    outs = [g.round_up(x) for x in xs]
    assert all(a <= b for a, b in zip(outs, outs[1:]))


def test_minifloat_and_uniform_constructors():
    g = ToyGrid.minifloat(2, 1, signed=False)
    assert [p.to_fraction() for p in g.points] == [0, Fraction(1, 2), 1, Fraction(3, 2), 2, 3, 4, 6]
    u = ToyGrid.uniform(Fraction(1, 4), 1, 4)
    assert [p.to_fraction() for p in u.points] == [Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), 1]
    with pytest.raises(ValueError):
        ToyGrid([])
    with pytest.raises(ValueError):
        ToyGrid.uniform(0, 1, 4)
