"""Interval-valued inverse CDFs.

A distribution usable by the refining sampler implements
:class:`IntervalDistribution`: given an exact dyadic interval ``[a, b]`` of
``[0, 1]`` and a working precision, ``interval_inv_cdf`` returns an
:class:`~refine_dp.exact_arith.Enclosure` containing ``F^-1(u)`` for every
``u`` in ``[a, b]``, and the enclosure tightens to ``[F^-1(a), F^-1(b)]`` as
the precision grows.

The Laplace quantile is monotone, so only the two endpoints are evaluated,
each with its own rounding direction:

    F^-1(u) = mu + beta * ln(2u)          for u <= 1/2
    F^-1(u) = mu - beta * ln(2(1 - u))    for u >= 1/2
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Protocol, runtime_checkable

from .exact_arith import (
    ONE,
    ZERO,
    NEG_INF,
    POS_INF,
    BigFloat,
    Enclosure,
    div_rounded,
    exp_enclosure,
    ln_bounds_fixed,
)

__all__ = [
    "IntervalDistribution",
    "LaplaceParams",
    "LaplaceDistribution",
    "interval_inv_cdf_laplace",
    "interval_cdf_laplace",
]


@runtime_checkable
class IntervalDistribution(Protocol):
    def interval_inv_cdf(self, a: BigFloat, b: BigFloat, prec: int) -> Enclosure: ...

    def interval_cdf(self, v: Enclosure, prec: int) -> Enclosure: ...


@dataclass(frozen=True)
class LaplaceParams:
    """Location ``mu`` and scale ``beta > 0``, both exact dyadics."""

    mu: BigFloat
    beta: BigFloat

    def __post_init__(self):
        object.__setattr__(self, "mu", BigFloat.coerce(self.mu))
        object.__setattr__(self, "beta", BigFloat.coerce(self.beta))
        if not self.mu.is_finite():
            raise ValueError("mu must be finite")
        if not self.beta.is_finite() or self.beta.sign() <= 0:
            raise ValueError("beta must be finite and positive")


def _check_unit_interval(a: BigFloat, b: BigFloat) -> None:
    if a.special or b.special:
        raise ValueError("interval endpoints must be finite")
    if a > b:
        raise ValueError(f"malformed interval [{a}, {b}]")
    if a.sign() < 0 or b > ONE:
        raise ValueError(f"interval [{a}, {b}] is not inside [0, 1]")


class LaplaceDistribution:
    """Laplace(mu, beta) with an interval inverse CDF."""

    def __init__(self, mu=0, beta=1):
        self.params = LaplaceParams(mu, beta)
        p = self.params
        self._mm, self._me = p.mu.man, p.mu.exp
        self._bm, self._be = p.beta.man, p.beta.exp
        # beta > 1 scales the ln error; spend that many extra bits
        self._extra = max(0, p.beta.man.bit_length() + p.beta.exp)

    @classmethod
    def from_params(cls, p: LaplaceParams) -> "LaplaceDistribution":
        return cls(p.mu, p.beta)

    @property
    def mu(self) -> BigFloat:
        return self.params.mu

    @property
    def beta(self) -> BigFloat:
        return self.params.beta

    def __repr__(self) -> str:
        return f"LaplaceDistribution(mu={self.mu.hex()}, beta={self.beta.hex()})"

    def _endpoint(self, m: int, e: int, prec: int, upper: bool) -> BigFloat:
        """Directed bound on ``F^-1(m * 2**e)`` for ``0 < m * 2**e < 1``."""
        # u <= 1/2  <=>  m * 2**(e+1) <= 1
        if e + 1 >= 0:
            low_branch = (m << (e + 1)) <= 1
        else:
            low_branch = m <= (1 << -(e + 1))
        if low_branch:
            # mu + beta * ln(2u), ln argument m * 2**(e+1)
            lo, hi, F = ln_bounds_fixed(m, e + 1, prec + self._extra)
            L = hi if upper else lo
            sign = 1
        else:
            # mu - beta * ln(2(1-u)), ln argument (2**-e - m) * 2**(e+1)
            lo, hi, F = ln_bounds_fixed((1 << -e) - m, e + 1, prec + self._extra)
            L = lo if upper else hi
            sign = -1
        # mu + sign * beta * L * 2**-F, exactly
        prod_m = sign * self._bm * L
        prod_e = self._be - F
        me = self._me
        if me <= prod_e:
            return BigFloat(self._mm + (prod_m << (prod_e - me)), me)
        return BigFloat((self._mm << (me - prod_e)) + prod_m, prod_e)

    def interval_inv_cdf(self, a, b, prec: int) -> Enclosure:
        a = BigFloat.coerce(a)
        b = BigFloat.coerce(b)
        _check_unit_interval(a, b)
        if prec < 1:
            raise ValueError("prec must be positive")
        if a.man == 0:
            lo = NEG_INF
        elif a.man == 1 and a.exp == 0:
            lo = POS_INF
        else:
            lo = self._endpoint(a.man, a.exp, prec, upper=False)
        if b.man == 1 and b.exp == 0:
            hi = POS_INF
        elif b.man == 0:
            hi = NEG_INF
        else:
            hi = self._endpoint(b.man, b.exp, prec, upper=True)
        enc = object.__new__(Enclosure)
        enc.lo = lo
        enc.hi = hi
        return enc

    def interval_cdf(self, v, prec: int) -> Enclosure:
        if not isinstance(v, Enclosure):
            v = Enclosure.point(v)
        return Enclosure(self._cdf_bound(v.lo, prec, upper=False), self._cdf_bound(v.hi, prec, upper=True))

    def _cdf_bound(self, x: BigFloat, prec: int, upper: bool) -> BigFloat:
        if x.special:
            return ONE if x.special > 0 else ZERO
        work = prec + 8
        y = div_rounded(x - self.mu, self.beta, work)  # standardized value
        if x <= self.mu:
            # F = exp(y) / 2, increasing in y
            e = exp_enclosure(y.hi if upper else y.lo, work)
            r = (e.hi if upper else e.lo).scale2(-1)
        else:
            # F = 1 - exp(-y) / 2; the upper bound needs the smallest exp(-y)
            e = exp_enclosure(-(y.hi if upper else y.lo), work)
            r = ONE - (e.lo if upper else e.hi).scale2(-1)
        if r.sign() < 0:
            return ZERO
        if r > ONE:
            return ONE
        return r

    def cdf_fraction_bounds(self, x, prec: int) -> tuple[Fraction, Fraction]:
        e = self.interval_cdf(Enclosure.point(BigFloat.coerce(x)), prec)
        return e.lo.to_fraction(), e.hi.to_fraction()


def interval_inv_cdf_laplace(p: LaplaceParams, a, b, prec: int) -> Enclosure:
    """Enclosure of the Laplace(mu, beta) quantile over ``[a, b]``."""
    return LaplaceDistribution.from_params(p).interval_inv_cdf(a, b, prec)


def interval_cdf_laplace(p: LaplaceParams, v, prec: int) -> Enclosure:
    """Enclosure of the Laplace(mu, beta) CDF over ``v``; always inside ``[0, 1]``."""
    return LaplaceDistribution.from_params(p).interval_cdf(v, prec)

