"""IEEE-754 binary64 introspection and finite rounding grids.

A *rounding grid* is a finite, ordered output space together with a ceiling
map from the reals onto it.  The preimage of a grid point ``p`` is the
half-open interval ``(predecessor(p), p]``.  :data:`BINARY64` is the grid of
all doubles (including the infinities, with the two zeros merged);
:class:`ToyGrid` holds a handful of dyadic points and exists so that the
sampler's full probability tree can be enumerated.
"""

from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .exact_arith import BigFloat

__all__ = [
    "FloatDecomposition",
    "decompose",
    "recompose",
    "ulp",
    "next_float_up",
    "is_on_grid_multiple",
    "lowest_set_bit_exponent",
    "RoundingGrid",
    "Binary64Grid",
    "BINARY64",
    "ToyGrid",
]

_MAX_FLOAT = BigFloat.from_float(1.7976931348623157e308)
_MIN_EXP = -1074  # exponent of the smallest subnormal


@dataclass(frozen=True)
class FloatDecomposition:
    sign: int
    exponent: int
    mantissa: int

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise ValueError("sign must be 0 or 1")
        if not 0 <= self.exponent <= 2047:
            raise ValueError("exponent field out of range")
        if not 0 <= self.mantissa < (1 << 52):
            raise ValueError("mantissa field out of range")


def _bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def decompose(x: float) -> FloatDecomposition:
    b = _bits(x)
    return FloatDecomposition(b >> 63, (b >> 52) & 0x7FF, b & ((1 << 52) - 1))


def recompose(d: FloatDecomposition) -> float:
    b = (d.sign << 63) | (d.exponent << 52) | d.mantissa
    return struct.unpack("<d", struct.pack("<Q", b))[0]


def ulp(x: float) -> float:
    """Distance from ``x`` to the next double away from zero.

    Subnormals have ulp ``2**-1074``.  Zero, infinities and NaN raise
    ``ValueError``.
    """
    if x == 0 or not math.isfinite(x):
        raise ValueError(f"ulp undefined for {x!r}")
    e = (_bits(x) >> 52) & 0x7FF
    if e == 0:
        return math.ldexp(1.0, _MIN_EXP)
    return math.ldexp(1.0, e - 1075)


def lowest_set_bit_exponent(x: float) -> int:
    """Largest ``k`` with ``x`` an integer multiple of ``2**k`` (finite nonzero ``x``)."""
    b = _bits(x)
    e = (b >> 52) & 0x7FF
    m = b & ((1 << 52) - 1)
    if e == 0x7FF:
        raise ValueError(f"not finite: {x!r}")
    if e:
        m |= 1 << 52
        scale = e - 1075
    else:
        scale = _MIN_EXP
    if not m:
        raise ValueError("zero is a multiple of every power of two")
    return scale + (m & -m).bit_length() - 1


def is_on_grid_multiple(x: float, step_log2: int) -> bool:
    """True iff ``x`` is an exact integer multiple of ``2**step_log2``."""
    if not math.isfinite(x):
        raise ValueError(f"not finite: {x!r}")
    if x == 0:
        return True
    return lowest_set_bit_exponent(x) >= step_log2


def next_float_up(v, saturate: bool = False) -> float:
    """Smallest double ``>= v`` for an exact dyadic ``v`` (ceiling).

    Values above the largest finite double map to ``+inf``.  Values below the
    most negative finite double map to ``-inf`` unless ``saturate`` is set.
    Results that would be ``-0.0`` are returned as ``0.0``.
    """
    if isinstance(v, float):
        if math.isnan(v):
            raise ValueError("NaN")
        return v + 0.0
    if not isinstance(v, BigFloat):
        v = BigFloat.coerce(v)
    if v.special:
        return math.inf if v.special > 0 else -math.inf
    m = v.man
    if not m:
        return 0.0
    E = v.exp
    neg = m < 0
    a = -m if neg else m
    bl = a.bit_length()
    top = bl - 1 + E  # 2**top <= |v| < 2**(top+1)
    if top > 1023 and not neg:
        return math.inf
    if neg and top >= 1023 and v < -_MAX_FLOAT:
        return -1.7976931348623157e308 if saturate else -math.inf
    q = top - 52
    if q < _MIN_EXP:
        q = _MIN_EXP
    if E >= q:
        k = a << (E - q)
    else:
        sh = q - E
        k = a >> sh
        if not neg and a & ((1 << sh) - 1):
            k += 1
    if not k:
        return 0.0
    try:
        r = math.ldexp(float(k), q)
    except OverflowError:
        return math.inf
    return -r if neg else r


class RoundingGrid:
    """Finite ordered output space with a ceiling map from the reals.

    Subclasses provide ``round_up``, ``predecessor``, ``enumerate`` and ``size``.
    """

    def round_up(self, v):
        raise NotImplementedError

    def predecessor(self, p):
        raise NotImplementedError

    def enumerate(self) -> list:
        raise NotImplementedError

    def size(self) -> int:
        raise NotImplementedError

    def to_exact(self, p):
        """Grid point as a BigFloat (infinities included)."""
        return BigFloat.coerce(p)


class Binary64Grid(RoundingGrid):
    """All doubles, ``-inf`` and ``+inf`` included, the two zeros merged."""

    def __init__(self, saturate: bool = False):
        self.saturate = saturate

    def round_up(self, v) -> float:
        return next_float_up(v, self.saturate)

    def predecessor(self, p: float) -> float:
        if p == 0:
            return -math.ldexp(1.0, _MIN_EXP)
        return math.nextafter(p, -math.inf)

    def enumerate(self) -> list:
        raise OverflowError("the binary64 grid is too large to enumerate")

    def size(self) -> int:
        # non-NaN bit patterns, with +0 and -0 counted once
        return (1 << 64) - ((1 << 53) - 2) - 1

    def __repr__(self) -> str:
        return "Binary64Grid()"


BINARY64 = Binary64Grid()


class ToyGrid(RoundingGrid):
    """A handful of dyadic points plus an overflow point at ``+inf``.

    ``round_up(x)`` is the smallest point ``>= x``; everything above the
    largest finite point rounds to ``+inf``, and everything at or below the
    smallest point (``-inf`` included) rounds to the smallest point.  The
    preimages therefore partition the extended reals.
    """

    def __init__(self, points):
        pts = sorted({BigFloat.coerce(p) for p in points})
        if not pts:
            raise ValueError("a grid needs at least one finite point")
        if any(p.special for p in pts):
            raise ValueError("toy grid points must be finite")
        self.points: tuple[BigFloat, ...] = tuple(pts)
        self.top = BigFloat.infinity(1)

    @classmethod
    def minifloat(cls, exp_bits: int, man_bits: int, bias: int | None = None, signed: bool = True) -> "ToyGrid":
        """Finite values of a tiny IEEE-like format (subnormals included, no infinities)."""
        if bias is None:
            bias = (1 << (exp_bits - 1)) - 1
        values = set()
        for e in range(1 << exp_bits):
            for m in range(1 << man_bits):
                if e == 0:
                    v = BigFloat(m, 1 - bias - man_bits)
                else:
                    v = BigFloat((1 << man_bits) | m, e - bias - man_bits)
                values.add(v)
                if signed:
                    values.add(-v)
        return cls(values)

    @classmethod
    def uniform(cls, lo, hi, n: int) -> "ToyGrid":
        """``n`` equally spaced points from ``lo`` to ``hi`` (spacing must be dyadic)."""
        lo, hi = Fraction(lo), Fraction(hi)
        if n < 2:
            return cls([BigFloat.from_fraction(lo)])
        step = (hi - lo) / (n - 1)
        return cls(BigFloat.from_fraction(lo + i * step) for i in range(n))

    def round_up(self, v) -> BigFloat:
        v = BigFloat.coerce(v)
        i = bisect.bisect_left(self.points, v)
        if i == len(self.points):
            return self.top
        return self.points[i]

    def predecessor(self, p) -> BigFloat:
        p = BigFloat.coerce(p)
        if p.special > 0:
            return self.points[-1]
        i = self.points.index(p)
        if i == 0:
            return BigFloat.infinity(-1)
        return self.points[i - 1]

    def enumerate(self) -> list:
        return [*self.points, self.top]

    def __iter__(self) -> Iterator[BigFloat]:
        return iter(self.enumerate())

    def size(self) -> int:
        return len(self.points) + 1

    def __repr__(self) -> str:
        return f"ToyGrid([{', '.join(str(float(p)) for p in self.points)}])"
