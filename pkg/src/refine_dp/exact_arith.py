"""Exact dyadic scalars and outward-rounded interval arithmetic.

:class:`BigFloat` is an exact dyadic rational ``man * 2**exp`` (or a signed
infinity).  Addition, subtraction, multiplication and halving are exact.
Division, ``ln`` and ``exp`` are only available as *enclosures*: they return
an :class:`Enclosure` guaranteed to contain the true real result, with the
working precision passed explicitly to every call.

``ln`` and ``exp`` are evaluated in fixed point with integer arithmetic and a
rigorous bound on every truncation, so containment does not depend on the
platform's floating-point unit or on any global rounding mode.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

__all__ = [
    "BigFloat",
    "Enclosure",
    "ArithmeticDomainError",
    "midpoint",
    "div_rounded",
    "ln_enclosure",
    "exp_enclosure",
    "ln_bounds_fixed",
]


class ArithmeticDomainError(ArithmeticError):
    """Invalid operation such as ``inf - inf``, ``0 * inf`` or ``ln`` of a non-positive value."""


_HEX_RE = re.compile(r"^([+-]?)0x([0-9a-fA-F]+)p([+-]?\d+)$")


class BigFloat:
    """Exact dyadic rational ``man * 2**exp``, or a signed infinity.

    Finite values are canonical: ``man`` is odd, or the value is ``0 * 2**0``.
    Instances are treated as immutable.
    """

    __slots__ = ("man", "exp", "special")

    def __init__(self, man: int = 0, exp: int = 0):
        if man:
            tz = (man & -man).bit_length() - 1
            if tz:
                man >>= tz
                exp += tz
        else:
            exp = 0
        self.man = man
        self.exp = exp
        self.special = 0

    # -- construction -----------------------------------------------------

    @classmethod
    def infinity(cls, sign: int = 1) -> "BigFloat":
        obj = object.__new__(cls)
        obj.man = 0
        obj.exp = 0
        obj.special = 1 if sign > 0 else -1
        return obj

    @classmethod
    def from_float(cls, x: float) -> "BigFloat":
        if math.isinf(x):
            return cls.infinity(1 if x > 0 else -1)
        if math.isnan(x):
            raise ValueError("NaN has no dyadic value")
        n, d = x.as_integer_ratio()
        return cls(n, 1 - d.bit_length())

    @classmethod
    def from_fraction(cls, q: Fraction) -> "BigFloat":
        q = Fraction(q)
        d = q.denominator
        if d & (d - 1):
            raise ValueError(f"{q} is not a dyadic rational")
        return cls(q.numerator, 1 - d.bit_length())

    @classmethod
    def coerce(cls, x) -> "BigFloat":
        """Convert ints, floats, dyadic Fractions and BigFloats exactly."""
        if isinstance(x, BigFloat):
            return x
        if isinstance(x, int):
            return cls(x, 0)
        if isinstance(x, float):
            return cls.from_float(x)
        if isinstance(x, Fraction):
            return cls.from_fraction(x)
        raise TypeError(f"cannot convert {type(x).__name__} to BigFloat exactly")

    @classmethod
    def from_hex(cls, text: str) -> "BigFloat":
        """Parse the ``±0xMANTISSAp±EXP`` form produced by :meth:`hex`."""
        text = text.strip()
        if text in ("+inf", "inf"):
            return cls.infinity(1)
        if text == "-inf":
            return cls.infinity(-1)
        m = _HEX_RE.match(text)
        if not m:
            raise ValueError(f"malformed hex dyadic: {text!r}")
        man = int(m.group(2), 16)
        if m.group(1) == "-":
            man = -man
        return cls(man, int(m.group(3)))

    # -- inspection -------------------------------------------------------

    def is_finite(self) -> bool:
        return not self.special

    def is_zero(self) -> bool:
        return not self.special and not self.man

    def sign(self) -> int:
        if self.special:
            return self.special
        return (self.man > 0) - (self.man < 0)

    def to_fraction(self) -> Fraction:
        if self.special:
            raise ArithmeticDomainError("infinity has no rational value")
        if self.exp >= 0:
            return Fraction(self.man << self.exp)
        return Fraction(self.man, 1 << -self.exp)

    def hex(self) -> str:
        if self.special:
            return "+inf" if self.special > 0 else "-inf"
        sign = "-" if self.man < 0 else "+"
        return f"{sign}0x{abs(self.man):x}p{self.exp:+d}"

    def __float__(self) -> float:
        # round-to-nearest; use float_grid.next_float_up for directed rounding
        if self.special:
            return math.inf * self.special
        return float(self.to_fraction())

    def __repr__(self) -> str:
        return f"BigFloat({self.hex()})"

    def __str__(self) -> str:
        return self.hex()

    def __hash__(self) -> int:
        return hash((self.man, self.exp, self.special))

    def __bool__(self) -> bool:
        return bool(self.man or self.special)

    # -- comparison -------------------------------------------------------

    def _cmp(self, other: "BigFloat") -> int:
        if self.special or other.special:
            a, b = self.special, other.special
            if a == b:
                return 0
            if a:
                return a
            return -b
        ma, mb = self.man, other.man
        if (ma > 0) != (mb > 0) or not ma or not mb:
            return (ma > mb) - (ma < mb)
        ea, eb = self.exp, other.exp
        # magnitudes first, so huge exponent gaps never get shifted out
        ta, tb = abs(ma).bit_length() + ea, abs(mb).bit_length() + eb
        if ta != tb:
            return (1 if ta > tb else -1) * (1 if ma > 0 else -1)
        if ea > eb:
            ma <<= ea - eb
        elif eb > ea:
            mb <<= eb - ea
        return (ma > mb) - (ma < mb)

    def __eq__(self, other):
        if not isinstance(other, BigFloat):
            try:
                other = BigFloat.coerce(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self.man == other.man and self.exp == other.exp and self.special == other.special

    def __lt__(self, other):
        return self._cmp(BigFloat.coerce(other)) < 0

    def __le__(self, other):
        return self._cmp(BigFloat.coerce(other)) <= 0

    def __gt__(self, other):
        return self._cmp(BigFloat.coerce(other)) > 0

    def __ge__(self, other):
        return self._cmp(BigFloat.coerce(other)) >= 0

    # -- exact arithmetic -------------------------------------------------

    def __neg__(self) -> "BigFloat":
        if self.special:
            return BigFloat.infinity(-self.special)
        out = object.__new__(BigFloat)
        out.man = -self.man
        out.exp = self.exp
        out.special = 0
        return out

    def __abs__(self) -> "BigFloat":
        return -self if self.sign() < 0 else self

    def __add__(self, other) -> "BigFloat":
        other = BigFloat.coerce(other)
        if self.special or other.special:
            if self.special and other.special and self.special != other.special:
                raise ArithmeticDomainError("inf - inf")
            return self if self.special else other
        ea, eb = self.exp, other.exp
        if ea <= eb:
            return BigFloat(self.man + (other.man << (eb - ea)), ea)
        return BigFloat((self.man << (ea - eb)) + other.man, eb)

    __radd__ = __add__

    def __sub__(self, other) -> "BigFloat":
        return self + (-BigFloat.coerce(other))

    def __rsub__(self, other) -> "BigFloat":
        return BigFloat.coerce(other) + (-self)

    def __mul__(self, other) -> "BigFloat":
        other = BigFloat.coerce(other)
        if self.special or other.special:
            sa, sb = self.sign(), other.sign()
            if sa == 0 or sb == 0:
                raise ArithmeticDomainError("0 * inf")
            return BigFloat.infinity(sa * sb)
        return BigFloat(self.man * other.man, self.exp + other.exp)

    __rmul__ = __mul__

    def scale2(self, k: int) -> "BigFloat":
        """Exact multiplication by ``2**k``."""
        if self.special or not self.man:
            return self
        return BigFloat(self.man, self.exp + k)

    # -- directed rounding ------------------------------------------------

    def round_floor(self, prec: int) -> "BigFloat":
        """Largest value with at most ``prec`` significant bits that is <= self."""
        m = self.man
        if self.special or not m:
            return self
        excess = abs(m).bit_length() - prec
        if excess <= 0:
            return self
        return BigFloat(m >> excess, self.exp + excess)

    def round_ceil(self, prec: int) -> "BigFloat":
        """Smallest value with at most ``prec`` significant bits that is >= self."""
        m = self.man
        if self.special or not m:
            return self
        excess = abs(m).bit_length() - prec
        if excess <= 0:
            return self
        return BigFloat(-((-m) >> excess), self.exp + excess)


ZERO = BigFloat(0)
ONE = BigFloat(1)
HALF = BigFloat(1, -1)
POS_INF = BigFloat.infinity(1)
NEG_INF = BigFloat.infinity(-1)


def midpoint(a, b) -> BigFloat:
    """Exact ``(a + b) / 2``."""
    return (BigFloat.coerce(a) + BigFloat.coerce(b)).scale2(-1)


def _div_scalar(x: BigFloat, y: BigFloat, prec: int, up: bool) -> BigFloat:
    if y.is_zero():
        raise ZeroDivisionError("division by zero")
    if x.special:
        if y.special:
            raise ArithmeticDomainError("inf / inf")
        return BigFloat.infinity(x.special * y.sign())
    if y.special or not x.man:
        return ZERO
    m1, m2 = x.man, y.man
    shift = max(0, prec + m2.bit_length() - m1.bit_length() + 1)
    num = m1 << shift
    if up:
        q = -((-num) // m2)
        return BigFloat(q, x.exp - y.exp - shift).round_ceil(prec)
    q = num // m2
    return BigFloat(q, x.exp - y.exp - shift).round_floor(prec)


class Enclosure:
    """Closed interval ``[lo, hi]`` of BigFloats known to contain a real value."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = BigFloat.coerce(lo)
        hi = lo if hi is None else BigFloat.coerce(hi)
        if lo > hi:
            raise ValueError(f"empty enclosure [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x) -> "Enclosure":
        return cls(x, x)

    def __repr__(self) -> str:
        return f"Enclosure({self.lo.hex()}, {self.hi.hex()})"

    def __eq__(self, other):
        if not isinstance(other, Enclosure):
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def width(self) -> BigFloat:
        return self.hi - self.lo

    def contains(self, x) -> bool:
        if isinstance(x, Enclosure):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction) and x.denominator & (x.denominator - 1):
            lo_ok = self.lo.special < 0 or (not self.lo.special and self.lo.to_fraction() <= x)
            hi_ok = self.hi.special > 0 or (not self.hi.special and x <= self.hi.to_fraction())
            return lo_ok and hi_ok
        x = BigFloat.coerce(x)
        return self.lo <= x <= self.hi

    __contains__ = contains

    def __neg__(self) -> "Enclosure":
        return Enclosure(-self.hi, -self.lo)

    def __add__(self, other) -> "Enclosure":
        other = _as_enclosure(other)
        return Enclosure(self.lo + other.lo, self.hi + other.hi)

    __radd__ = __add__

    def __sub__(self, other) -> "Enclosure":
        other = _as_enclosure(other)
        return Enclosure(self.lo - other.hi, self.hi - other.lo)

    def __rsub__(self, other) -> "Enclosure":
        return _as_enclosure(other) - self

    def __mul__(self, other) -> "Enclosure":
        other = _as_enclosure(other)
        products = [a * b for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Enclosure(min(products), max(products))

    __rmul__ = __mul__

    def shift(self, x) -> "Enclosure":
        """Exact translation by a dyadic."""
        x = BigFloat.coerce(x)
        return Enclosure(self.lo + x, self.hi + x)


def _as_enclosure(x) -> Enclosure:
    return x if isinstance(x, Enclosure) else Enclosure.point(x)


def div_rounded(a, b, prec: int) -> Enclosure:
    """Enclosure of ``a / b`` with endpoints rounded outward to ``prec`` bits."""
    if prec < 1:
        raise ValueError("prec must be positive")
    a, b = _as_enclosure(a), _as_enclosure(b)
    if b.lo.sign() <= 0 <= b.hi.sign():
        raise ZeroDivisionError("divisor enclosure contains zero")
    if b.lo.sign() < 0:
        a, b = -a, -b
    lo = _div_scalar(a.lo, b.hi if a.lo.sign() >= 0 else b.lo, prec, up=False)
    hi = _div_scalar(a.hi, b.lo if a.hi.sign() >= 0 else b.hi, prec, up=True)
    return Enclosure(lo, hi)


# ---------------------------------------------------------------------------
# Fixed-point transcendental kernels.  Values are integers in units of 2**-F.

_TABLE_BITS = 6
_TABLE_ONE = 1 << _TABLE_BITS
_LN_TABLES: dict[int, list[tuple[int, int]]] = {}
_LN_TABLE_CACHE_MAX = 64


def _atanh_bounds(num: int, den: int, F: int) -> tuple[int, int]:
    """Bounds ``(lo, hi)`` on ``atanh(num/den) * 2**F``; needs den > 0, |num/den| <= 1/2."""
    if not num:
        return 0, 0
    Z = (num << F) // den  # true z*2**F lies in [Z, Z+1)
    T = -Z if Z < 0 else Z
    # series at t = T*2**-F with floors; each term underestimates by < 2 units
    W = (T * T) >> F
    P = T
    S = 0
    j = 1
    n_terms = 0
    while P:
        S += P // j
        P = (P * W) >> F
        j += 2
        n_terms += 1
    # truncation < 2 per term plus tail < 2N; atanh(t) in [S, S + 4N + 1]
    lo, hi = S, S + 4 * n_terms + 1
    if Z < 0:
        lo, hi = -hi, -lo
    # the unit of slack in Z moves atanh by at most 4/3 units
    return lo, hi + 2


def _ln_table(F: int) -> list[tuple[int, int]]:
    """``ln(C / 2**t)`` bounds for ``C`` in ``[2**t, 2**(t+1)]`` in units of 2**-F."""
    table = _LN_TABLES.get(F)
    if table is None:
        table = []
        for C in range(_TABLE_ONE, 2 * _TABLE_ONE + 1):
            lo, hi = _atanh_bounds(C - _TABLE_ONE, C + _TABLE_ONE, F)
            table.append((2 * lo, 2 * hi))
        if len(_LN_TABLES) >= _LN_TABLE_CACHE_MAX:
            _LN_TABLES.clear()
        _LN_TABLES[F] = table
    return table


def ln_bounds_fixed(m: int, e: int, prec: int) -> tuple[int, int, int]:
    """Bounds on ``ln(m * 2**e)`` for ``m > 0`` as ``(lo, hi, F)`` in units of 2**-F.

    The absolute error is below ``2**-(prec + 2)``.
    """
    bl = m.bit_length()
    n = bl - 1 + e  # m*2**e = 2**n * y with y in [1, 2)
    # table entries carry ~8F/3 units of slack, scaled by |n| for the ln 2 part
    F = prec + 12 + n.bit_length() + prec.bit_length()
    table = _ln_table(F)
    sh = bl - 1 - _TABLE_BITS
    if sh > 0:
        C = (m + (1 << (sh - 1))) >> sh
        cs = C << sh
        zl, zh = _atanh_bounds(m - cs, m + cs, F)
    else:
        C = m << -sh
        zl = zh = 0
    tl, th = table[C - _TABLE_ONE]
    if n:
        l2l, l2h = table[-1]
        if n > 0:
            tl += n * l2l
            th += n * l2h
        else:
            tl += n * l2h
            th += n * l2l
    return tl + 2 * zl, th + 2 * zh, F


def _ln_scalar(x: BigFloat, prec: int) -> tuple[BigFloat, BigFloat]:
    if x.special > 0:
        return POS_INF, POS_INF
    if x.special or x.man <= 0:
        raise ArithmeticDomainError("ln of non-positive value")
    lo, hi, F = ln_bounds_fixed(x.man, x.exp, prec)
    return BigFloat(lo, -F), BigFloat(hi, -F)


def ln_enclosure(x, prec: int) -> Enclosure:
    """Enclosure of ``ln`` over a positive enclosure.

    ``x.lo == 0`` is allowed and yields ``lo = -inf``.
    """
    if prec < 1:
        raise ValueError("prec must be positive")
    x = _as_enclosure(x)
    if x.hi.sign() <= 0:
        raise ArithmeticDomainError("ln of non-positive enclosure")
    if x.lo.sign() < 0:
        raise ArithmeticDomainError("ln over an enclosure reaching below zero")
    lo = NEG_INF if x.lo.is_zero() else _ln_scalar(x.lo, prec)[0]
    hi = _ln_scalar(x.hi, prec)[1]
    return Enclosure(lo, hi)


def _exp_pos_bounds(R: int, F: int) -> tuple[int, int]:
    """Bounds on ``exp(R * 2**-F) * 2**F`` for ``0 <= R <= 2 * 2**F``."""
    T = 1 << F
    S = 0
    j = 0
    while T:
        S += T
        j += 1
        T = ((T * R) >> F) // j
    # term j underestimates by < 2j; tail after j terms < 2 * (2j)
    return S, S + j * j + 4 * j + 1


def _exp_fixed_bounds(R: int, F: int) -> tuple[int, int]:
    """Bounds on ``exp(R * 2**-F) * 2**F`` for ``|R| <= 2 * 2**F``."""
    if R >= 0:
        return _exp_pos_bounds(R, F)
    lo, hi = _exp_pos_bounds(-R, F)
    one2 = 1 << (2 * F)
    return one2 // hi, -((-one2) // lo)


_EXP_HUGE = 1 << 16


def _exp_scalar(y: BigFloat, prec: int, up: bool) -> BigFloat:
    """Directed bound on ``exp(y)``."""
    if y.special:
        return POS_INF if y.special > 0 else ZERO
    if not y.man:
        return ONE
    if y > _EXP_HUGE:
        # exp(y) > 2**y > 2**_EXP_HUGE
        return POS_INF if up else BigFloat(1, _EXP_HUGE)
    if y < -_EXP_HUGE:
        # 0 < exp(y) < 2**y < 2**-_EXP_HUGE
        return BigFloat(1, -_EXP_HUGE) if up else ZERO
    # y = n*ln2 + r with r roughly in [0, ln2); n only needs to be approximate
    yf = float(y)
    n = math.floor(yf / math.log(2))
    F = prec + 24 + abs(n).bit_length()
    l2l, l2h = _ln_table(F)[-1]
    # y in units of 2**-F, rounded in the needed direction
    if y.exp >= -F:
        Y = y.man << (y.exp + F)
    elif up:
        Y = -((-y.man) >> (-F - y.exp))
    else:
        Y = y.man >> (-F - y.exp)
    if up:
        R = Y - (n * l2l if n >= 0 else n * l2h)
    else:
        R = Y - (n * l2h if n >= 0 else n * l2l)
    if abs(R) > (2 << F):
        raise AssertionError("exp argument reduction out of range")
    lo, hi = _exp_fixed_bounds(R, F)
    return BigFloat(hi if up else lo, n - F)


def exp_enclosure(x, prec: int) -> Enclosure:
    """Enclosure of ``exp`` over an enclosure (exp is monotone)."""
    if prec < 1:
        raise ValueError("prec must be positive")
    x = _as_enclosure(x)
    return Enclosure(_exp_scalar(x.lo, prec, up=False), _exp_scalar(x.hi, prec, up=True))
