"""Differentially private mechanisms built on the refining sampler.

The Laplace mechanism samples *with the query value as the location*; the
noise is never materialized and never added to the query result in floating
point.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .exact_arith import BigFloat, Enclosure, div_rounded
from .float_grid import BINARY64
from .inverse_cdf import IntervalDistribution, LaplaceDistribution
from .refine_sampler import (
    BOTTOM,
    BitTape,
    Bottom,
    SamplerConfig,
    chunk_index,
    refine,
)

__all__ = ["PrivacyBudget", "laplace_mechanism", "noisy_argmax", "ArgmaxBottom", "laplace_noise"]


def _exact_value(x, what: str) -> BigFloat:
    if isinstance(x, float):
        raise TypeError(
            f"{what} must be exact (int, dyadic Fraction or BigFloat); "
            "wrap a float known to be exact with BigFloat.from_float"
        )
    try:
        return BigFloat.coerce(x)
    except ValueError as exc:
        raise ValueError(f"{what} must be a dyadic rational: {exc}") from None


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy parameter ``epsilon`` (exact rational) and query sensitivity (exact dyadic)."""

    epsilon: Fraction
    sensitivity: BigFloat = BigFloat(1)

    def __post_init__(self):
        eps = self.epsilon
        if isinstance(eps, float):
            raise TypeError("epsilon must be exact; pass a Fraction or an int")
        object.__setattr__(self, "epsilon", Fraction(eps))
        object.__setattr__(self, "sensitivity", _exact_value(self.sensitivity, "sensitivity"))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not self.sensitivity.is_finite() or self.sensitivity.sign() <= 0:
            raise ValueError("sensitivity must be positive and finite")

    def scale_enclosure(self, prec: int = 64) -> Enclosure:
        """Enclosure of ``sensitivity / epsilon``."""
        eps = self.epsilon
        num = self.sensitivity * eps.denominator
        return div_rounded(num, BigFloat(eps.numerator), prec)

    def scale(self, prec: int = 64) -> BigFloat:
        """Noise scale rounded *up*: never less noise than requested."""
        return self.scale_enclosure(prec).hi


def laplace_mechanism(
    f_value,
    budget: PrivacyBudget,
    cfg: SamplerConfig | None = None,
    tape: BitTape | None = None,
) -> float:
    """Release ``f_value`` with Laplace noise of scale ``sensitivity / epsilon``.

    ``f_value`` must be exact; approximate floats are refused.  The result is
    ``round_up(f_value + X)`` for ``X ~ Laplace(0, beta)``, computed by
    sampling Laplace(f_value, beta) directly.  Raises
    :class:`~refine_dp.refine_sampler.Bottom` if the iteration cap is hit.
    """
    mu = _exact_value(f_value, "f_value")
    beta = budget.scale((cfg or SamplerConfig()).base_prec)
    trace = refine(LaplaceDistribution(mu, beta), cfg, tape, BINARY64)
    if trace.output is BOTTOM:
        raise Bottom(trace)
    return trace.output


class ArgmaxBottom(RuntimeError):
    """No candidate separated from the others within the iteration cap."""


def noisy_argmax(
    values: Sequence,
    noise,
    cfg: SamplerConfig | None = None,
    tapes: Sequence[BitTape] | None = None,
) -> int:
    """Index of the largest ``values[i] + Z_i`` (experimental).

    ``noise`` is one :class:`IntervalDistribution` shared by all candidates
    or a sequence with one per candidate; each noisy value is
    ``values[i] + F_i^-1(U_i)``.  All candidates are refined in lockstep, one
    chunk per round from their own tape, until one enclosure lies strictly
    above every other.  No noisy value is ever rounded.  This operation has
    no privacy proof and is excluded from the privacy guarantees of the
    Laplace mechanism.
    """
    if cfg is None:
        cfg = SamplerConfig()
    vals = [_exact_value(v, "value") for v in values]
    n = len(vals)
    if n < 2:
        raise ValueError("need at least two candidates")
    if isinstance(noise, IntervalDistribution) or not isinstance(noise, Sequence):
        dists = [noise] * n
    else:
        dists = list(noise)
    if len(dists) != n:
        raise ValueError("one noise distribution per candidate")
    if tapes is None:
        tapes = [BitTape.live() for _ in range(n)]
    if len(tapes) != n:
        raise ValueError("one tape per candidate")
    c = cfg.chunk_bits
    index = [0] * n
    m = 0
    k = 0
    while cfg.max_iterations is None or k < cfg.max_iterations:
        k += 1
        m += c
        prec = cfg.precision(k)
        encs = []
        for i in range(n):
            index[i] = (index[i] << c) | chunk_index(tapes[i].read(c), c)
            e = dists[i].interval_inv_cdf(BigFloat(index[i], -m), BigFloat(index[i] + 1, -m), prec)
            encs.append(Enclosure(e.lo + vals[i], e.hi + vals[i]))
        best = max(range(n), key=lambda i: encs[i].lo)
        if all(encs[best].lo > encs[j].hi for j in range(n) if j != best):
            return best
    raise ArgmaxBottom(f"no winner within {k} rounds")


def laplace_noise(beta=1) -> LaplaceDistribution:
    """Zero-location Laplace noise for :func:`noisy_argmax`."""
    return LaplaceDistribution(0, beta)
