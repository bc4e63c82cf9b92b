"""Exact scalars of the form a*2^i + b*2^j*sqrt(2).

The rational component alone is an ordinary dyadic rational, which is what almost
every quantity in the package is (coordinates, volumes, signal values, energies).
The sqrt(2) component exists because an L2-normalized Haar function whose support
volume is an odd power of two takes values m*2^e*sqrt(2).  The set
{a + b*sqrt(2) : a, b dyadic} is a ring, so sums and products of any values the
package produces stay exactly representable.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

from .errors import ExactnessError

_SQRT2 = math.sqrt(2.0)


def _normal(m: int, e: int) -> tuple[int, int]:
    # canonical: mantissa odd or zero; zero carries exponent 0
    if m == 0:
        return 0, 0
    while m % 2 == 0:
        m //= 2
        e += 1
    return m, e


def _comp_add(m1: int, e1: int, m2: int, e2: int) -> tuple[int, int]:
    if m1 == 0:
        return m2, e2
    if m2 == 0:
        return m1, e1
    e = min(e1, e2)
    return _normal(m1 * (1 << (e1 - e)) + m2 * (1 << (e2 - e)), e)


def _comp_float(m: int, e: int) -> float:
    if m == 0:
        return 0.0
    if abs(m) < (1 << 52):
        return math.ldexp(m, e)
    return float(Fraction(m) * Fraction(2) ** e)


class DyadicRational:
    """Immutable exact scalar a*2^ea + b*2^eb*sqrt(2), components canonical."""

    __slots__ = ("mantissa", "exponent", "root_mantissa", "root_exponent")

    def __init__(self, mantissa: int = 0, exponent: int = 0,
                 root_mantissa: int = 0, root_exponent: int = 0):
        m, e = _normal(int(mantissa), int(exponent))
        rm, re = _normal(int(root_mantissa), int(root_exponent))
        object.__setattr__(self, "mantissa", m)
        object.__setattr__(self, "exponent", e)
        object.__setattr__(self, "root_mantissa", rm)
        object.__setattr__(self, "root_exponent", re)

    def __setattr__(self, name, value):
        raise AttributeError("DyadicRational is immutable")

    # ---- constructors ----

    @classmethod
    def zero(cls) -> "DyadicRational":
        return cls(0, 0)

    @classmethod
    def one(cls) -> "DyadicRational":
        return cls(1, 0)

    @classmethod
    def from_int(cls, n: int) -> "DyadicRational":
        return cls(n, 0)

    @classmethod
    def pow2(cls, k: int) -> "DyadicRational":
        return cls(1, k)

    @classmethod
    def sqrt_pow2(cls, k: int) -> "DyadicRational":
        """Exact 2^(k/2): rational for even k, a sqrt(2) multiple for odd k."""
        if k % 2 == 0:
            return cls(1, k // 2)
        return cls(0, 0, 1, (k - 1) // 2)

    @classmethod
    def from_float(cls, x: float) -> "DyadicRational":
        if x != x or x in (float("inf"), float("-inf")):
            raise ValueError(f"not a finite value: {x}")
        m, d = float(x).as_integer_ratio()
        return cls(m, -(d.bit_length() - 1))

    @classmethod
    def from_fraction(cls, fr: Fraction) -> "DyadicRational":
        den = fr.denominator
        if den & (den - 1):
            raise ValueError(f"denominator {den} is not a power of two")
        return cls(fr.numerator, -(den.bit_length() - 1))

    # ---- predicates and conversions ----

    @property
    def is_rational(self) -> bool:
        return self.root_mantissa == 0

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0 and self.root_mantissa == 0

    def as_fraction(self) -> Fraction:
        if self.root_mantissa != 0:
            raise ValueError("value has an irrational sqrt(2) component")
        return Fraction(self.mantissa) * Fraction(2) ** self.exponent

    def to_float(self) -> float:
        out = _comp_float(self.mantissa, self.exponent)
        if self.root_mantissa:
            out += _comp_float(self.root_mantissa, self.root_exponent) * _SQRT2
        return out

    __float__ = to_float

    def sign(self) -> int:
        a, b = self.mantissa, self.root_mantissa
        if b == 0:
            return 0 if a == 0 else (1 if a > 0 else -1)
        if a == 0:
            return 1 if b > 0 else -1
        sa = 1 if a > 0 else -1
        sb = 1 if b > 0 else -1
        if sa == sb:
            return sa
        # sign of a + b*sqrt(2) with opposite signs: compare a^2 against 2 b^2
        lhs = a * a, 2 * self.exponent
        rhs = 2 * b * b, 2 * self.root_exponent
        e = min(lhs[1], rhs[1])
        diff = lhs[0] * (1 << (lhs[1] - e)) - rhs[0] * (1 << (rhs[1] - e))
        if diff == 0:
            raise AssertionError("sqrt(2) is irrational; exact tie impossible")
        return sa if diff > 0 else sb

    # ---- arithmetic ----

    @staticmethod
    def _coerce(other) -> "DyadicRational | None":
        if isinstance(other, DyadicRational):
            return other
        if isinstance(other, int):
            return DyadicRational(other, 0)
        if isinstance(other, Fraction):
            return DyadicRational.from_fraction(other)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        m, e = _comp_add(self.mantissa, self.exponent, o.mantissa, o.exponent)
        rm, re = _comp_add(self.root_mantissa, self.root_exponent,
                           o.root_mantissa, o.root_exponent)
        return DyadicRational(m, e, rm, re)

    __radd__ = __add__

    def __neg__(self):
        return DyadicRational(-self.mantissa, self.exponent,
                              -self.root_mantissa, self.root_exponent)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        a1, e1, b1, f1 = self.mantissa, self.exponent, self.root_mantissa, self.root_exponent
        a2, e2, b2, f2 = o.mantissa, o.exponent, o.root_mantissa, o.root_exponent
        # (a1 + b1 r)(a2 + b2 r) = (a1 a2 + 2 b1 b2) + (a1 b2 + b1 a2) r,  r = sqrt(2)
        m, e = _comp_add(a1 * a2, e1 + e2, 2 * b1 * b2, f1 + f2)
        rm, re = _comp_add(a1 * b2, e1 + f2, b1 * a2, f1 + e2)
        return DyadicRational(m, e, rm, re)

    __rmul__ = __mul__

    def mul_pow2(self, k: int) -> "DyadicRational":
        return DyadicRational(self.mantissa, self.exponent + k,
                              self.root_mantissa, self.root_exponent + k)

    def divide_exact(self, n: int) -> "DyadicRational":
        """Exact division by a nonzero integer; raises if any remainder."""
        if n == 0:
            raise ZeroDivisionError("division by zero")
        sign = 1 if n > 0 else -1
        n = abs(n)
        shift = 0
        while n % 2 == 0:
            n //= 2
            shift += 1
        m, rm = self.mantissa, self.root_mantissa
        if m % n or rm % n:
            raise ExactnessError(f"{self!r} is not divisible by {sign * n * (1 << shift)}")
        return DyadicRational(sign * (m // n), self.exponent - shift,
                              sign * (rm // n), self.root_exponent - shift)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        out = DyadicRational.one()
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # ---- ordering, equality, hashing ----

    def _key(self):
        return (self.mantissa, self.exponent, self.root_mantissa, self.root_exponent)

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self._key() == o._key()

    def __hash__(self):
        if self.root_mantissa == 0:
            return hash(self.as_fraction())
        return hash(self._key())

    def __lt__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o).sign() < 0

    def __le__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o).sign() <= 0

    def __gt__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o).sign() > 0

    def __ge__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o).sign() >= 0

    # ---- text form ----

    def to_tokens(self) -> str:
        """Serialize as 'm e exp' (rational) or 'm e exp r m e exp'."""
        base = f"{self.mantissa} e {self.exponent}"
        if self.root_mantissa == 0:
            return base
        return f"{base} r {self.root_mantissa} e {self.root_exponent}"

    @classmethod
    def from_tokens(cls, text: str) -> "DyadicRational":
        parts = text.split()
        if len(parts) == 3 and parts[1] == "e":
            return cls(int(parts[0]), int(parts[2]))
        if (len(parts) == 7 and parts[1] == "e" and parts[3] == "r"
                and parts[5] == "e"):
            return cls(int(parts[0]), int(parts[2]), int(parts[4]), int(parts[6]))
        raise ValueError(f"malformed dyadic value line: {text!r}")

    def __repr__(self):
        s = f"{self.mantissa}*2^{self.exponent}"
        if self.root_mantissa:
            s += f" + {self.root_mantissa}*2^{self.root_exponent}*sqrt2"
        return f"DyadicRational({s})"

    # ---- integer helpers used by grid coordinates ----

    def floor_shifted(self, k: int) -> int:
        """floor(self * 2^k) for rational self; exact."""
        if self.root_mantissa != 0:
            raise ValueError("floor of an irrational value is not supported")
        e = self.exponent + k
        if e >= 0:
            return self.mantissa << e
        return self.mantissa >> (-e)

    def mod_pow2(self, L: int) -> "DyadicRational":
        """self mod 2^L into [0, 2^L); rational values only."""
        q = self.floor_shifted(-L)
        return self - DyadicRational(q, L)


Number = Union[int, DyadicRational]

DR = DyadicRational
