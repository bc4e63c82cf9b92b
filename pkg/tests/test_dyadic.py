"""Exact arithmetic in Z[1/2, sqrt(2)]: canonical forms, ring laws, ordering."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from twistedhaar import DyadicRational as DR
from twistedhaar.errors import ExactnessError


def rational(a, ea=0):
    return DR(a, ea)


def root(b, eb=0):
    return DR(0, 0, b, eb)


SQRT2 = root(1)


class TestCanonical:
    def test_constants(self):
        assert DR.zero().is_zero
        assert DR.one() == DR.from_int(1)
        assert DR.pow2(3) == DR.from_int(8)
        assert DR.pow2(-2).as_fraction() == Fraction(1, 4)

    def test_mantissa_normalized_odd(self):
        x = DR(12, 0)
        assert x.mantissa % 2 == 1 or x.mantissa == 0
        assert x == DR(3, 2)

    def test_sqrt_pow2_even_exponent_is_rational(self):
        assert DR.sqrt_pow2(4) == DR.from_int(4)
        assert DR.sqrt_pow2(0) == DR.one()
        assert DR.sqrt_pow2(-2).as_fraction() == Fraction(1, 2)

    def test_sqrt_pow2_odd_exponent_has_root(self):
        x = DR.sqrt_pow2(3)
        assert not x.is_rational
        assert x * x == DR.pow2(3)

    def test_from_float_exact_dyadics(self):
        assert DR.from_float(0.375).as_fraction() == Fraction(3, 8)
        assert DR.from_float(-2.5).as_fraction() == Fraction(-5, 2)

    def test_from_fraction(self):
        assert DR.from_fraction(Fraction(7, 16)).as_fraction() == Fraction(7, 16)
        with pytest.raises(Exception):
            DR.from_fraction(Fraction(1, 3))


class TestArithmetic:
    def test_conjugate_product(self):
        # (1 + sqrt2)(1 - sqrt2) = -1
        x = DR.one() + SQRT2
        y = DR.one() - SQRT2
        assert x * y == DR.from_int(-1)

    def test_sqrt2_squares_to_two(self):
        assert SQRT2 * SQRT2 == DR.from_int(2)
        assert SQRT2 ** 4 == DR.from_int(4)

    def test_int_coercion(self):
        x = DR(3, -1)
        assert x * 2 == DR.from_int(3)
        assert x + 1 == DR(5, -1)
        assert 1 - x == DR(-1, -1)

    def test_mul_pow2(self):
        x = DR(3, -2) + root(5, -1)
        assert x.mul_pow2(3) == DR(3, 1) + root(5, 2)

    def test_divide_exact(self):
        assert DR.from_int(6).divide_exact(3) == DR.from_int(2)
        assert DR.from_int(3).divide_exact(2) == DR(3, -1)
        assert (root(3) + DR.from_int(6)).divide_exact(3) == root(1) + DR.from_int(2)
        with pytest.raises(ExactnessError):
            DR.from_int(1).divide_exact(3)
        with pytest.raises(ZeroDivisionError):
            DR.one().divide_exact(0)

    def test_pow(self):
        x = DR(3, -1) + root(1, -1)
        assert x ** 0 == DR.one()
        assert x ** 3 == x * x * x

    def test_abs_sign(self):
        assert abs(DR.from_int(-3)) == DR.from_int(3)
        assert (SQRT2 - DR.one()).sign() == 1
        assert (DR.one() - SQRT2).sign() == -1
        assert DR.zero().sign() == 0


class TestOrdering:
    def test_tight_rational_vs_root(self):
        # 1.4140625 = 181/128 < sqrt2 < 181.25/128
        assert DR(181, -7) < SQRT2
        assert SQRT2 < DR(1450, -10)
        assert root(3) > DR.from_int(4)       # 4.2426 > 4
        assert root(3) < DR(17, -2)           # 4.2426 < 4.25

    def test_total_order_consistency(self):
        xs = [DR.zero(), DR.one(), SQRT2, -SQRT2, DR(3, -1), root(1, -1),
              DR.one() + SQRT2, DR.one() - SQRT2]
        srt = sorted(xs)
        floats = [x.to_float() for x in srt]
        assert floats == sorted(floats)


class TestTokens:
    def test_roundtrip(self):
        for x in (DR.zero(), DR(-7, 3), root(5, -4), DR(3, -2) + root(-1, 1)):
            assert DR.from_tokens(x.to_tokens()) == x

    def test_floor_and_mod(self):
        x = DR(5, -2)        # 1.25
        assert x.floor_shifted(0) == 1
        assert x.floor_shifted(2) == 5
        assert x.mod_pow2(0) == DR(1, -2)
        assert DR.from_int(-1).mod_pow2(2) == DR.from_int(3)

    def test_floor_of_root_rejected(self):
        # grid coordinates are rational; flooring a root value is a bug upstream
        with pytest.raises(ValueError):
            SQRT2.floor_shifted(0)


small = st.integers(min_value=-64, max_value=64)
exps = st.integers(min_value=-6, max_value=6)


@st.composite
def dyadics(draw):
    return DR(draw(small), draw(exps), draw(small), draw(exps))


def model(x: DR) -> tuple[Fraction, Fraction]:
    """(rational part, sqrt2 coefficient) as exact fractions."""
    return (Fraction(x.mantissa) * Fraction(2) ** x.exponent,
            Fraction(x.root_mantissa) * Fraction(2) ** x.root_exponent)


def model_lt(x, y):
    (p, q), (r, s) = model(x), model(y)
    a, b = p - r, q - s        # test a + b*sqrt2 < 0
    if b == 0:
        return a < 0
    if a == 0:
        return b < 0
    if a < 0 and b < 0:
        return True
    if a > 0 and b > 0:
        return False
    # opposite signs: compare a^2 with 2 b^2 on the side of the larger term
    return (a * a < 2 * b * b) if b < 0 else (a * a > 2 * b * b)


class TestProperties:
    @given(dyadics(), dyadics(), dyadics())
    def test_ring_laws(self, x, y, z):
        assert (x + y) + z == x + (y + z)
        assert x * (y + z) == x * y + x * z
        assert (x * y) * z == x * (y * z)
        assert x + (-x) == DR.zero()

    @given(dyadics(), dyadics())
    def test_order_matches_model(self, x, y):
        assert (x < y) == model_lt(x, y)
        assert (x == y) == (model(x) == model(y))

    @given(dyadics())
    def test_token_roundtrip(self, x):
        assert DR.from_tokens(x.to_tokens()) == x

    @given(dyadics(), st.integers(min_value=-8, max_value=8))
    def test_mul_pow2_matches_mul(self, x, k):
        if k >= 0:
            assert x.mul_pow2(k) == x * (1 << k)
        else:
            assert x.mul_pow2(k).mul_pow2(-k) == x

    @given(st.integers(min_value=-512, max_value=512), exps,
           st.integers(min_value=-4, max_value=8))
    def test_floor_shifted_rational(self, m, e, k):
        x = DR(m, e)
        want = (Fraction(m) * Fraction(2) ** (e + k)).__floor__()
        assert x.floor_shifted(k) == want

    @given(st.integers(min_value=-512, max_value=512), exps,
           st.integers(min_value=0, max_value=6))
    def test_mod_pow2_range(self, m, e, L):
        x = DR(m, e)
        r = x.mod_pow2(L)
        assert DR.zero() <= r < DR.pow2(L)
        q = x - r
        # quotient is an integer multiple of 2^L
        assert q.mod_pow2(L).is_zero
