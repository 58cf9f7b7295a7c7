"""Verification and measurement for the refining sampler.

Two complementary checks:

* On tiny rounding grids the sampler's whole probability tree is enumerated
  (every bit tape of length ``k``), giving the exact output distribution
  ``P_k`` over grid points and ``BOTTOM``.  It is compared in exact rational
  arithmetic with ``Q``, the distribution of ``round_up(X)``.
* On the real binary64 grid, where individual point probabilities are far
  too small to estimate, samples are bucketed at double-aligned breakpoints
  and compared with exact bucket probabilities by a chi-square test.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import os
import platform
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .exact_arith import BigFloat, Enclosure
from .float_grid import BINARY64, RoundingGrid, ToyGrid, next_float_up
from .inverse_cdf import IntervalDistribution, LaplaceDistribution, LaplaceParams
from .refine_sampler import BOTTOM, BitTape, SamplerConfig, refine

__all__ = [
    "BucketSpec",
    "ExactDistribution",
    "PiecewiseLinearDistribution",
    "exact_bucket_probability",
    "equal_probability_buckets",
    "goodness_of_fit",
    "FitReport",
    "enumerate_process",
    "enumerate_depths",
    "exact_rounded_distribution",
    "rounded_distribution_bounds",
    "tvd",
    "ToyConfig",
    "toy_configurations",
    "check_toy_config",
    "VerifyReport",
    "bench",
    "BenchReport",
    "machine_metadata",
]


def machine_metadata() -> dict:
    return {
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "implementation": platform.python_implementation(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
    }


def _rows_to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- bucket probabilities -----------------------------------------------------


@dataclass(frozen=True)
class BucketSpec:
    """Buckets ``(-inf, b_0], (b_0, b_1], ..., (b_last, +inf)`` on double breakpoints."""

    breakpoints: tuple[float, ...]

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        if not bps:
            raise ValueError("need at least one breakpoint")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(b != b or b in (float("inf"), float("-inf")) for b in bps):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "breakpoints", bps)

    def __len__(self) -> int:
        return len(self.breakpoints) + 1

    def bounds(self) -> list[tuple[BigFloat, BigFloat]]:
        ends = [BigFloat.infinity(-1), *map(BigFloat.from_float, self.breakpoints), BigFloat.infinity(1)]
        return list(zip(ends, ends[1:]))

    def counts(self, samples) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(samples, dtype=float), side="left")
        return np.bincount(idx, minlength=len(self))


def exact_bucket_probability(dist, lo, hi, prec: int = 64) -> Enclosure:
    """Enclosure of ``F(hi) - F(lo)``, the probability of the bucket ``(lo, hi]``."""
    if isinstance(dist, LaplaceParams):
        dist = LaplaceDistribution.from_params(dist)
    lo, hi = BigFloat.coerce(lo), BigFloat.coerce(hi)
    if lo > hi:
        raise ValueError("bucket lower end above upper end")
    fl = dist.interval_cdf(Enclosure.point(lo), prec)
    fh = dist.interval_cdf(Enclosure.point(hi), prec)
    p_lo = fh.lo - fl.hi
    if p_lo.sign() < 0:
        p_lo = BigFloat(0)
    return Enclosure(p_lo, fh.hi - fl.lo)


def equal_probability_buckets(dist, n_buckets: int, prec: int = 64) -> BucketSpec:
    """Breakpoints at the doubles just above the ``i / n`` quantiles."""
    if isinstance(dist, LaplaceParams):
        dist = LaplaceDistribution.from_params(dist)
    bps = []
    for i in range(1, n_buckets):
        q = BigFloat.from_fraction(Fraction(i, n_buckets)) if (n_buckets & (n_buckets - 1)) == 0 else None
        if q is None:
            # the breakpoint only needs to be close to the quantile, not exact
            q = BigFloat(round(Fraction(i, n_buckets) * (1 << 60)), -60)
        e = dist.interval_inv_cdf(q, q, prec)
        bps.append(next_float_up(e.hi))
    return BucketSpec(tuple(bps))


def _bucket_probabilities(dist, spec: BucketSpec, rel_width: float = 1e-6) -> list[Fraction]:
    """Bucket probabilities as midpoints of enclosures narrower than ``rel_width * p``."""
    out = []
    for lo, hi in spec.bounds():
        prec = 64
        while True:
            e = exact_bucket_probability(dist, lo, hi, prec)
            lo_f, hi_f = e.lo.to_fraction(), e.hi.to_fraction()
            mid = (lo_f + hi_f) / 2
            if mid > 0 and hi_f - lo_f <= Fraction(rel_width) * mid:
                out.append(mid)
                break
            prec *= 2
            if prec > 1 << 14:
                raise RuntimeError("bucket probability enclosure does not tighten")
    return out


@dataclass
class FitReport:
    n: int
    buckets: int
    chi2: float
    dof: int
    p_value: float
    breakpoints: list[float]
    counts: list[int]
    expected: list[float]
    z_scores: list[float]
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        lows = ["-inf", *map(repr, self.breakpoints)]
        highs = [*map(repr, self.breakpoints), "inf"]
        rows = zip(range(self.buckets), lows, highs, self.counts, self.expected, self.z_scores)
        return _rows_to_csv(["bucket", "lower_exclusive", "upper_inclusive", "observed", "expected", "z"], rows)


def goodness_of_fit(samples, dist, spec: BucketSpec, min_expected: float = 20.0) -> FitReport:
    """Chi-square test of rounded samples against ``dist`` on the given buckets."""
    if isinstance(dist, LaplaceParams):
        dist = LaplaceDistribution.from_params(dist)
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 10_000:
        raise ValueError(f"need at least 10000 samples, got {n}")
    probs = _bucket_probabilities(dist, spec)
    expected = np.array([float(p) * n for p in probs])
    if expected.min() < min_expected:
        raise ValueError(f"bucket with expected count {expected.min():.2f} < {min_expected}")
    counts = spec.counts(samples)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    dof = len(spec) - 1
    p_value = float(stats.chi2.sf(chi2, dof))
    p = np.array([float(q) for q in probs])
    z = (counts - expected) / np.sqrt(n * p * (1 - p))
    params = {}
    if isinstance(dist, LaplaceDistribution):
        params = {"mu": dist.mu.hex(), "beta": dist.beta.hex()}
    return FitReport(
        n=int(n),
        buckets=len(spec),
        chi2=chi2,
        dof=dof,
        p_value=p_value,
        breakpoints=list(spec.breakpoints),
        counts=[int(c) for c in counts],
        expected=expected.tolist(),
        z_scores=z.tolist(),
        params=params,
    )


# -- exact distributions --------------------------------------------------------


class ExactDistribution:
    """Exact rational probabilities over a fixed universe of outcomes."""

    def __init__(self, probs: dict, universe: Iterable | None = None, check: bool = True):
        self.probs = {k: Fraction(v) for k, v in probs.items()}
        self.universe = frozenset(universe) if universe is not None else frozenset(self.probs)
        stray = set(self.probs) - self.universe
        if stray:
            raise ValueError(f"outcomes outside the universe: {stray}")
        if check:
            if any(not 0 <= v <= 1 for v in self.probs.values()):
                raise ValueError("probabilities must lie in [0, 1]")
            if sum(self.probs.values()) != 1:
                raise ValueError("probabilities must sum to exactly 1")

    def __getitem__(self, key) -> Fraction:
        if key not in self.universe:
            raise KeyError(key)
        return self.probs.get(key, Fraction(0))

    def support(self) -> list:
        return [k for k, v in self.probs.items() if v]

    def total(self) -> Fraction:
        return sum(self.probs.values(), Fraction(0))

    def __repr__(self) -> str:
        return f"ExactDistribution({len(self.support())} outcomes)"


def tvd(p: ExactDistribution, q: ExactDistribution) -> Fraction:
    """Total variation distance ``(1/2) sum |p - q|`` in exact arithmetic."""
    if p.universe != q.universe:
        raise ValueError("distributions are over different universes")
    return sum((abs(p[s] - q[s]) for s in p.universe), Fraction(0)) / 2


def _grid_universe(grid: RoundingGrid) -> set:
    return {*grid.enumerate(), BOTTOM}


def enumerate_depths(
    grid: RoundingGrid,
    dist: IntervalDistribution,
    cfg: SamplerConfig,
    k: int,
) -> list[ExactDistribution]:
    """``[P_1, ..., P_k]`` from one pass over all ``2**(k * chunk_bits)`` tapes.

    ``P_j`` is the output distribution when the run is capped at ``j``
    iterations.
    """
    total_bits = k * cfg.chunk_bits
    if total_bits > 24:
        raise ValueError(f"2**{total_bits} tapes is too many to enumerate")
    grid.enumerate()  # raises for grids too large to enumerate
    capped = SamplerConfig(cfg.chunk_bits, cfg.base_prec, cfg.prec_step, k, cfg.overflow_mode)
    weight = Fraction(1, 1 << total_bits)
    stop_counts: list[Counter] = [Counter() for _ in range(k + 1)]
    for value in range(1 << total_bits):
        tr = refine(dist, capped, BitTape.replay_int(value, total_bits), grid)
        if tr.output is BOTTOM:
            stop_counts[0][BOTTOM] += 1
        else:
            stop_counts[tr.n_iterations][tr.output] += 1
    universe = _grid_universe(grid)
    out = []
    running: Counter = Counter()
    n_tapes = 1 << total_bits
    for j in range(1, k + 1):
        running.update(stop_counts[j])
        probs = {s: c * weight for s, c in running.items()}
        probs[BOTTOM] = (n_tapes - sum(running.values())) * weight
        out.append(ExactDistribution(probs, universe))
    return out


def enumerate_process(
    grid: RoundingGrid,
    dist: IntervalDistribution,
    cfg: SamplerConfig,
    k: int,
) -> ExactDistribution:
    """Exact output distribution ``P_k`` of the sampler capped at ``k`` iterations.

    Every bit tape of length ``k * chunk_bits`` is run through the sampler;
    each carries probability ``2**-(k * chunk_bits)``.
    """
    return enumerate_depths(grid, dist, cfg, k)[-1]


def exact_rounded_distribution(grid: ToyGrid, dist) -> ExactDistribution:
    """``Q(s) = F(s) - F(pred(s))`` for a distribution with an exact rational CDF."""
    probs = {}
    prev = Fraction(0)
    for p in grid.points:
        f = dist.cdf_exact(p)
        probs[p] = f - prev
        prev = f
    probs[grid.top] = 1 - prev
    probs[BOTTOM] = Fraction(0)
    return ExactDistribution(probs, _grid_universe(grid))


def rounded_distribution_bounds(grid: ToyGrid, dist, prec: int = 128) -> dict:
    """Rational bounds ``(lo, hi)`` on ``Q(s)`` for every grid point ``s``."""
    cdf = [(Fraction(0), Fraction(0))]
    for p in grid.points:
        e = dist.interval_cdf(Enclosure.point(p), prec)
        cdf.append((e.lo.to_fraction(), e.hi.to_fraction()))
    cdf.append((Fraction(1), Fraction(1)))
    points = grid.enumerate()
    out = {}
    for i, s in enumerate(points):
        lo = max(Fraction(0), cdf[i + 1][0] - cdf[i][1])
        out[s] = (lo, cdf[i + 1][1] - cdf[i][0])
    out[BOTTOM] = (Fraction(0), Fraction(0))
    return out


# -- toy distributions and configurations --------------------------------------


class PiecewiseLinearDistribution:
    """Distribution with a piecewise-linear CDF through ``(x_i, u_i)`` knots.

    The inverse CDF is exact; ``interval_inv_cdf`` rounds it outward to a
    dyadic grid of ``2**-(prec - slack_bits)`` so that low precisions give
    visibly loose enclosures.
    """

    def __init__(self, knots: Sequence[tuple], slack_bits: int = 0):
        ks = [(Fraction(x), Fraction(u)) for x, u in knots]
        if len(ks) < 2 or ks[0][1] != 0 or ks[-1][1] != 1:
            raise ValueError("knots must run from u=0 to u=1")
        for (x0, u0), (x1, u1) in zip(ks, ks[1:]):
            if not (x1 > x0 and u1 > u0):
                raise ValueError("knots must be strictly increasing in x and u")
        for x, _ in ks:
            BigFloat.from_fraction(x)  # knot positions must be dyadic
        self.knots = ks
        self.slack_bits = slack_bits

    def __repr__(self) -> str:
        pts = ", ".join(f"({x}, {u})" for x, u in self.knots)
        return f"PiecewiseLinearDistribution([{pts}], slack_bits={self.slack_bits})"

    def inv_cdf_exact(self, u: Fraction) -> Fraction:
        u = Fraction(u)
        ks = self.knots
        i = bisect.bisect_left([k[1] for k in ks], u)
        if i == 0:
            return ks[0][0]
        (x0, u0), (x1, u1) = ks[i - 1], ks[i]
        return x0 + (u - u0) * (x1 - x0) / (u1 - u0)

    def cdf_exact(self, x) -> Fraction:
        x = BigFloat.coerce(x)
        if x.special:
            return Fraction(1 if x.special > 0 else 0)
        xf = x.to_fraction()
        ks = self.knots
        if xf <= ks[0][0]:
            return Fraction(0)
        if xf >= ks[-1][0]:
            return Fraction(1)
        i = bisect.bisect_right([k[0] for k in ks], xf)
        (x0, u0), (x1, u1) = ks[i - 1], ks[i]
        return u0 + (xf - x0) * (u1 - u0) / (x1 - x0)

    def _outward(self, q: Fraction, g: int, up: bool) -> BigFloat:
        scaled = q * (1 << g)
        n = -((-scaled.numerator) // scaled.denominator) if up else scaled.numerator // scaled.denominator
        return BigFloat(n, -g)

    def interval_inv_cdf(self, a, b, prec: int) -> Enclosure:
        a, b = BigFloat.coerce(a), BigFloat.coerce(b)
        g = max(1, prec - self.slack_bits)
        lo = self._outward(self.inv_cdf_exact(a.to_fraction()), g, up=False)
        hi = self._outward(self.inv_cdf_exact(b.to_fraction()), g, up=True)
        return Enclosure(lo, hi)

    def interval_cdf(self, v, prec: int) -> Enclosure:
        if not isinstance(v, Enclosure):
            v = Enclosure.point(v)
        return Enclosure(
            self._outward(self.cdf_exact(v.lo), prec, up=False),
            self._outward(self.cdf_exact(v.hi), prec, up=True),
        )


@dataclass
class ToyConfig:
    name: str
    grid: ToyGrid
    dist: object
    cfg: SamplerConfig
    exact: bool


def toy_configurations() -> list[ToyConfig]:
    """Grid/distribution pairs used for the exhaustive checks."""
    F = Fraction
    one_bit = dict(chunk_bits=1, base_prec=16, prec_step=1)
    return [
        ToyConfig(
            "4pt-linear-symmetric",
            ToyGrid([-1, 0, 1, F(3, 2)]),
            PiecewiseLinearDistribution([(-2, 0), (0, F(1, 2)), (2, 1)], slack_bits=10),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "8pt-median-on-grid",
            ToyGrid([F(-3, 2), -1, F(-1, 2), 0, F(1, 4), F(1, 2), 1, 2]),
            PiecewiseLinearDistribution([(-2, 0), (-1, F(1, 8)), (0, F(1, 2)), (1, F(7, 8)), (2, 1)], slack_bits=12),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "16pt-minifloat-third",
            ToyGrid.minifloat(2, 1),
            PiecewiseLinearDistribution([(-6, 0), (F(-1, 2), F(1, 3)), (F(3, 4), F(2, 3)), (6, 1)], slack_bits=8),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "5pt-steep",
            ToyGrid([F(1, 8), F(1, 4), F(3, 8), F(1, 2), 1]),
            PiecewiseLinearDistribution([(0, 0), (F(1, 4), F(7, 8)), (1, 1)], slack_bits=14),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "4pt-uniform-exact",
            ToyGrid.uniform(F(1, 4), 1, 4),
            PiecewiseLinearDistribution([(0, 0), (1, 1)], slack_bits=0),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "6pt-uniform-tail-mass",
            ToyGrid([F(-1, 2), F(-1, 4), 0, F(1, 8), F(1, 4), F(3, 4)]),
            PiecewiseLinearDistribution([(-1, 0), (F(1, 16), F(3, 5)), (1, 1)], slack_bits=6),
            SamplerConfig(**one_bit),
            True,
        ),
        ToyConfig(
            "8pt-laplace",
            ToyGrid([-2, -1, F(-1, 2), 0, F(1, 2), 1, 2, 4]),
            LaplaceDistribution(0, 1),
            SamplerConfig(**one_bit),
            False,
        ),
    ]


@dataclass
class VerifyReport:
    name: str
    grid_size: int
    exact: bool
    depths: list[int]
    p_bottom: list[str]
    tvd: list[str]
    point_bound_holds: list[bool]
    tvd_identity_holds: list[bool]
    bottom_monotone: bool
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.point_bound_holds) and all(self.tvd_identity_holds) and self.bottom_monotone

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_toy_config(conf: ToyConfig, depths: Sequence[int] = (4, 8, 12)) -> VerifyReport:
    """Check ``P_k(s) <= Q(s)``, ``TVD(P_k, Q) == P_k(BOTTOM)`` and monotone ``P_k(BOTTOM)``."""
    kmax = max(depths)
    all_p = enumerate_depths(conf.grid, conf.dist, conf.cfg, kmax)
    if conf.exact:
        q = exact_rounded_distribution(conf.grid, conf.dist)
        q_bounds = {s: (q[s], q[s]) for s in q.universe}
    else:
        q = None
        q_bounds = rounded_distribution_bounds(conf.grid, conf.dist)
    rep = VerifyReport(conf.name, conf.grid.size(), conf.exact, list(depths), [], [], [], [], True)
    prev_bottom = None
    for k in depths:
        p = all_p[k - 1]
        bot = p[BOTTOM]
        bound_ok = True
        for s in p.universe:
            if s is BOTTOM:
                continue
            if p[s] > q_bounds[s][0]:
                bound_ok = False
                rep.violations.append(f"k={k}: P({s}) = {p[s]} exceeds Q lower bound {q_bounds[s][0]}")
        if q is not None:
            d = tvd(p, q)
            identity = d == bot
            rep.tvd.append(str(d))
        else:
            d_lo = sum((abs(q_bounds[s][0] - p[s]) for s in p.universe if s is not BOTTOM), Fraction(0))
            d_hi = sum((abs(q_bounds[s][1] - p[s]) for s in p.universe if s is not BOTTOM), Fraction(0))
            d_lo, d_hi = (d_lo + bot) / 2, (d_hi + bot) / 2
            identity = bound_ok and d_lo <= bot <= d_hi
            rep.tvd.append(f"[{float(d_lo):.12g}, {float(d_hi):.12g}]")
        if not identity:
            rep.violations.append(f"k={k}: TVD does not equal P(BOTTOM) = {bot}")
        rep.p_bottom.append(str(bot))
        rep.point_bound_holds.append(bound_ok)
        rep.tvd_identity_holds.append(identity)
        if prev_bottom is not None and bot > prev_bottom:
            rep.bottom_monotone = False
            rep.violations.append(f"k={k}: P(BOTTOM) increased")
        prev_bottom = bot
    return rep


# -- benchmarking -------------------------------------------------------------------


@dataclass
class BenchReport:
    n: int
    chunk_bits: int
    seconds: float
    samples_per_second: float
    histogram: dict[int, int]
    fractions: dict[int, float]
    bottoms: int
    params: dict
    machine: dict
    seed: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = {str(k): v for k, v in self.histogram.items()}
        d["fractions"] = {str(k): v for k, v in self.fractions.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        rows = [(k, self.histogram[k], self.fractions[k]) for k in sorted(self.histogram)]
        return _rows_to_csv(["iterations", "count", "fraction"], rows)


def bench(
    params=LaplaceParams(BigFloat(0), BigFloat(1)),
    cfg: SamplerConfig | None = None,
    n: int = 100_000,
    tape: BitTape | None = None,
    seed: int | None = None,
    samples_out: list | None = None,
    min_n: int = 10_000,
) -> BenchReport:
    """Time ``n`` samples and histogram their iteration counts."""
    if n <= 0:
        raise ValueError("n must be positive")
    if n < min_n:
        raise ValueError(f"need at least {min_n} samples for stable statistics, got {n}")
    if cfg is None:
        cfg = SamplerConfig()
    dist = params if isinstance(params, LaplaceDistribution) else LaplaceDistribution.from_params(params)
    if tape is None:
        tape = BitTape.seeded(seed) if seed is not None else BitTape.live()
    hist: Counter = Counter()
    bottoms = 0
    t0 = time.perf_counter()
    for _ in range(n):
        tr = refine(dist, cfg, tape, BINARY64)
        hist[tr.n_iterations] += 1
        if tr.output is BOTTOM:
            bottoms += 1
        elif samples_out is not None:
            samples_out.append(tr.output)
    dt = time.perf_counter() - t0
    hist_d = dict(sorted(hist.items()))
    return BenchReport(
        n=n,
        chunk_bits=cfg.chunk_bits,
        seconds=dt,
        samples_per_second=n / dt if dt > 0 else float("inf"),
        histogram=hist_d,
        fractions={k: v / n for k, v in hist_d.items()},
        bottoms=bottoms,
        params={"mu": dist.mu.hex(), "beta": dist.beta.hex()},
        machine=machine_metadata(),
        seed=seed,
    )
