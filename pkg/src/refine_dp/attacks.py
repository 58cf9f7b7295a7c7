"""Precision-based attacks on naive floating-point noise mechanisms.

The fixtures here are *deliberately vulnerable*: they reproduce two sampling
patterns found in deployed libraries,

* add-after-sample: ``x + r`` for a hole-free noise value ``r``;
* uniform-in-interval: ``x + (y - x) * r`` for ``r`` uniform in ``[0, 1)``;

and the attack drivers count outputs that are possible under one input and
impossible under its neighbour.  When ``x != 0`` every ``x + y`` computed in
binary64 is a multiple of ``ulp(x) / 2``, so an output off that grid rules
the input out.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .exact_arith import BigFloat, Enclosure, exp_enclosure
from .float_grid import is_on_grid_multiple, lowest_set_bit_exponent, ulp
from .inverse_cdf import LaplaceDistribution
from .mechanisms import PrivacyBudget, laplace_mechanism
from .refine_sampler import BitTape, SamplerConfig, refine

__all__ = [
    "AttackReport",
    "naive_additive_sample",
    "coarse_uniform",
    "fine_uniform",
    "naive_uniform_interval",
    "quantile_intervals",
    "select_interval",
    "naive_quantile_sample",
    "run_additive_attack",
    "run_quantile_attack",
]


@dataclass
class AttackReport:
    mechanism: str
    inputs: list
    samples_per_side: int
    predicate: str
    events: list[int]
    fractions: list[float]
    verified_events: list[int]
    verdict: str
    seed: int | None
    notes: str = ""
    examples: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "AttackReport":
        return cls(**json.loads(text))

    def table(self) -> str:
        rows = [f"mechanism : {self.mechanism}", f"predicate : {self.predicate}", f"samples   : {self.samples_per_side} per side"]
        for label, ev, fr, ver in zip(self.inputs, self.events, self.fractions, self.verified_events):
            rows.append(f"  input {str(label):<24} events {ev:>8}  fraction {fr:.4f}  verified {ver}")
        rows.append(f"verdict   : {self.verdict}")
        rows.append(f"seed      : {self.seed}")
        return "\n".join(rows)


def _verdict(events: Sequence[int]) -> str:
    fired = [e > 0 for e in events]
    return "vulnerable" if sum(fired) == 1 else "no finding"


def _exact_off_grid(x: float, step_log2: int) -> bool:
    """Independent rational check that ``x`` is not a multiple of ``2**step_log2``."""
    q = Fraction(x) / Fraction(2) ** step_log2
    return q.denominator != 1


# -- vulnerable fixtures ------------------------------------------------------


def naive_additive_sample(x: float, beta: float, rng: random.Random, cfg: SamplerConfig | None = None) -> float:
    """VULNERABLE: ``x (+) r`` for a hole-free Laplace(0, beta) sample ``r``."""
    dist = LaplaceDistribution(0, BigFloat.from_float(beta))
    r = refine(dist, cfg, BitTape.from_random(rng)).output
    return x + r


def coarse_uniform(rng: random.Random) -> float:
    """Uniform ``[0, 1)`` on multiples of ``2**-53``, like ``random.random()``."""
    return rng.getrandbits(53) * 2.0**-53


def fine_uniform(rng: random.Random) -> float:
    """Hole-free uniform ``[0, 1)``: every double below 1 is reachable."""
    e = -1
    while not rng.getrandbits(1):
        e -= 1
        if e < -1074:
            return 0.0
    m = rng.getrandbits(52)
    # (1.m) * 2**e, truncated into the subnormal range when needed
    if e >= -1022:
        return math.ldexp(float((1 << 52) | m), e - 52)
    return math.ldexp(float(((1 << 52) | m) >> (-1022 - e)), -1074)


def naive_uniform_interval(x: float, y: float, mode: str, rng: random.Random, r: float | None = None) -> float:
    """VULNERABLE: ``x (+) (y (-) x) (*) r`` with ``r`` drawn by ``mode``."""
    if not x < y:
        raise ValueError("need x < y")
    if r is None:
        if mode == "coarse":
            r = coarse_uniform(rng)
        elif mode == "fine":
            r = fine_uniform(rng)
        else:
            raise ValueError(f"unknown uniform mode {mode!r}")
    return x + (y - x) * r


# -- exponential-mechanism quantile ------------------------------------------


def quantile_intervals(data: Sequence[float], q: Fraction = Fraction(1, 2)):
    """Data-defined intervals ``[x_i, x_{i+1})`` with rank utilities ``-|i + 1 - q n|``."""
    xs = sorted(data)
    n = len(xs)
    out = []
    for i in range(n - 1):
        out.append((xs[i], xs[i + 1], -abs(Fraction(i + 1) - q * n)))
    return out


_weight_cache: dict = {}


def _cumulative(weights_log, prec: int):
    weights = []
    for w, l in weights_log:
        if w.is_zero():
            weights.append(Enclosure.point(0))
        else:
            weights.append(exp_enclosure(l, prec) * w)
    cum_lo = [BigFloat(0)]
    cum_hi = [BigFloat(0)]
    for e in weights:
        cum_lo.append(cum_lo[-1] + e.lo)
        cum_hi.append(cum_hi[-1] + e.hi)
    return weights, cum_lo, cum_hi


def select_interval(weights_log: Sequence[tuple[BigFloat, BigFloat]], rng: random.Random, start_prec: int = 64) -> int:
    """Pick index ``i`` with probability ``w_i exp(l_i) / sum_j w_j exp(l_j)``.

    ``weights_log`` holds ``(w_i, l_i)`` with ``w_i >= 0``.  The choice is
    exact: a uniform ``U`` is refined bit by bit until its dyadic interval
    falls between two enclosed cumulative boundaries.
    """
    key = (tuple(weights_log), start_prec)
    cached = _weight_cache.get(key)
    if cached is None:
        cached = _cumulative(weights_log, start_prec)
        if len(_weight_cache) > 256:
            _weight_cache.clear()
        _weight_cache[key] = cached
    prec = start_prec
    weights, cum_lo, cum_hi = cached
    A, m = 0, 0
    while True:
        A = (A << 8) | rng.getrandbits(8)
        m += 8
        if m + 16 > prec:
            # the uniform is now finer than the weights; tighten them
            prec = m + 32
            weights, cum_lo, cum_hi = _cumulative(weights_log, prec)
        tot_lo, tot_hi = cum_lo[-1], cum_hi[-1]
        u_lo, u_hi = BigFloat(A, -m), BigFloat(A + 1, -m)
        for i, e in enumerate(weights):
            if e.hi.is_zero():
                continue
            # U*total in [u_lo*tot_lo, u_hi*tot_hi] must lie inside (cum_hi[i], cum_lo[i+1])
            if cum_hi[i] <= u_lo * tot_lo and u_hi * tot_hi < cum_lo[i + 1]:
                return i


def naive_quantile_sample(data: Sequence[float], mode: str, rng: random.Random, epsilon: Fraction = Fraction(1)) -> float:
    """VULNERABLE: exponential-mechanism median followed by a naive uniform draw."""
    ivs = quantile_intervals(data)
    wl = []
    for x, y, util in ivs:
        w = BigFloat.from_float(y) - BigFloat.from_float(x)
        l = BigFloat.from_fraction(Fraction(epsilon) * util / 2)
        wl.append((w, l))
    i = select_interval(wl, rng)
    x, y, _ = ivs[i]
    return naive_uniform_interval(x, y, mode, rng)


# -- drivers ------------------------------------------------------------------


def _count_events(outputs, step_log2: int, keep: int = 3):
    events = 0
    verified = 0
    examples: list[str] = []
    for v in outputs:
        if not is_on_grid_multiple(v, step_log2):
            events += 1
            if _exact_off_grid(v, step_log2) and lowest_set_bit_exponent(v) < step_log2:
                verified += 1
            if len(examples) < keep:
                examples.append(v.hex())
    return events, verified, examples


def run_additive_attack(
    mu0: float = 0.0,
    mu1: float = 1.0,
    beta: float = 1.0,
    n: int = 100_000,
    seed: int | None = 0,
    safe: bool = False,
    step_log2: int | None = None,
    cfg: SamplerConfig | None = None,
) -> AttackReport:
    """Distinguish ``mu0`` from ``mu1`` by the off-grid predicate.

    The grid step defaults to ``ulp(mu1) / 2`` (falling back to ``mu0``, then
    to ``2**-53`` when both are zero).  With ``safe=True`` the samples come
    from the Laplace mechanism instead of the add-after-sample pattern.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000")
    if seed is None:
        seed = random.SystemRandom().getrandbits(63)
    if step_log2 is None:
        anchor = mu1 if mu1 != 0 else mu0
        step_log2 = -53 if anchor == 0 else int(math.log2(ulp(anchor))) - 1
    rng = random.Random(seed)
    sides = []
    for mu in (mu0, mu1):
        if safe:
            budget = PrivacyBudget(Fraction(1), BigFloat.from_float(beta))
            tape = BitTape.from_random(rng)
            mu_exact = BigFloat.from_float(mu)
            outs = [laplace_mechanism(mu_exact, budget, cfg, tape) for _ in range(n)]
        else:
            outs = [naive_additive_sample(mu, beta, rng, cfg) for _ in range(n)]
        sides.append(_count_events(outs, step_log2))
    events = [s[0] for s in sides]
    return AttackReport(
        mechanism="laplace_mechanism (safe)" if safe else "add-after-sample Laplace",
        inputs=[mu0, mu1],
        samples_per_side=n,
        predicate=f"output is not a multiple of 2^{step_log2}",
        events=events,
        fractions=[e / n for e in events],
        verified_events=[s[1] for s in sides],
        verdict=_verdict(events),
        seed=seed,
        notes=f"beta={beta}",
        examples=[x for s in sides for x in s[2]],
    )


def run_quantile_attack(
    d1: Sequence[float],
    d2: Sequence[float],
    variant: str = "coarse",
    n: int = 100_000,
    seed: int | None = 0,
    step_log2: int = -53,
    epsilon: Fraction = Fraction(1),
) -> AttackReport:
    """Distinguish datasets ``d1`` and ``d2`` through the naive median mechanism."""
    if variant not in ("coarse", "fine"):
        raise ValueError("variant must be 'coarse' or 'fine'")
    if max(len(d1), len(d2)) > 10:
        raise ValueError("datasets are limited to 10 values")
    if seed is None:
        seed = random.SystemRandom().getrandbits(63)
    rng = random.Random(seed)
    sides = []
    for data in (d1, d2):
        outs = [naive_quantile_sample(data, variant, rng, epsilon) for _ in range(n)]
        sides.append(_count_events(outs, step_log2))
    events = [s[0] for s in sides]
    return AttackReport(
        mechanism=f"exponential-mechanism median, {variant} uniform",
        inputs=[list(d1), list(d2)],
        samples_per_side=n,
        predicate=f"output is not a multiple of 2^{step_log2}",
        events=events,
        fractions=[e / n for e in events],
        verified_events=[s[1] for s in sides],
        verdict=_verdict(events),
        seed=seed,
        notes=f"epsilon={epsilon}",
        examples=[x for s in sides for x in s[2]],
    )
