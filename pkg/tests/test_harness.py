import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from conftest import mpf_to_fraction
from refine_dp.exact_arith import BigFloat
from refine_dp.float_grid import ToyGrid
from refine_dp.harness import (
    BucketSpec,
    ExactDistribution,
    PiecewiseLinearDistribution,
    bench,
    check_toy_config,
    enumerate_depths,
    enumerate_process,
    equal_probability_buckets,
    exact_bucket_probability,
    exact_rounded_distribution,
    goodness_of_fit,
    rounded_distribution_bounds,
    toy_configurations,
    tvd,
)
from refine_dp.inverse_cdf import LaplaceDistribution, LaplaceParams
from refine_dp.refine_sampler import BOTTOM, SamplerConfig

STD = LaplaceParams(0, 1)
ONE_BIT = SamplerConfig(chunk_bits=1, base_prec=16)


def four_point():
    grid = ToyGrid([-1, 0, 1, Fraction(3, 2)])
    dist = PiecewiseLinearDistribution([(-2, 0), (0, Fraction(1, 2)), (2, 1)], slack_bits=10)
    return grid, dist


def test_bucket_probability_examples():
    inf = BigFloat.infinity(1)
    assert exact_bucket_probability(STD, -inf, 0, 64).contains(Fraction(1, 2))
    with mpmath.workprec(400):
        ln2 = mpf_to_fraction(mpmath.log(2))
    # ln 2 bracketed by two dyadics; the bucket probability moves by < 2**-190
    lo = BigFloat.from_fraction(Fraction(math.floor(ln2 * 2**200), 2**200))
    e = exact_bucket_probability(STD, 0, lo, 256)
    assert e.lo.to_fraction() <= Fraction(1, 4) <= e.hi.to_fraction() + Fraction(1, 2**190)
    left = exact_bucket_probability(STD, -inf, BigFloat(3, -1), 64)
    right = exact_bucket_probability(STD, BigFloat(3, -1), inf, 64)
    total = left + right
    assert total.contains(1)


def test_bucket_spec_validation_and_counts():
    with pytest.raises(ValueError):
        BucketSpec(())
    with pytest.raises(ValueError):
        BucketSpec((1.0, 0.5))
    spec = BucketSpec((0.0, 1.0))
    assert len(spec) == 3
    assert list(spec.counts([-1.0, 0.0, 0.5, 1.0, 2.0])) == [2, 2, 1]


def test_equal_probability_buckets_are_near_equal():
    spec = equal_probability_buckets(STD, 40)
    for lo, hi in spec.bounds():
        p = exact_bucket_probability(STD, lo, hi, 64)
        assert abs(float(p.lo.to_fraction()) - 1 / 40) < 1e-12


def test_goodness_of_fit_errors():
    spec = equal_probability_buckets(STD, 10)
    with pytest.raises(ValueError):
        goodness_of_fit([], STD, spec)
    with pytest.raises(ValueError):
        goodness_of_fit(np.zeros(20_000), STD, BucketSpec((-30.0, 0.0)))


def test_goodness_of_fit_small_run():
    samples = []
    bench(STD, n=50_000, seed=8, samples_out=samples)
    spec = equal_probability_buckets(STD, 20)
    rep = goodness_of_fit(samples, STD, spec)
    assert rep.p_value > 1e-4
    assert sum(rep.counts) == 50_000
    assert len(rep.z_scores) == 20
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "bucket,lower_exclusive,upper_inclusive,observed,expected,z"
    bad = goodness_of_fit(np.asarray(samples) + 0.5, STD, spec)
    assert bad.p_value < 1e-6


def test_exact_distribution_invariants():
    with pytest.raises(ValueError):
        ExactDistribution({"a": Fraction(1, 2)})
    with pytest.raises(ValueError):
        ExactDistribution({"a": Fraction(3, 2), "b": Fraction(-1, 2)})
    p = ExactDistribution({"a": Fraction(1)}, universe={"a", "b"})
    assert p["b"] == 0
    with pytest.raises(KeyError):
        p["c"]


def test_tvd_examples():
    p = ExactDistribution({"s": Fraction(1)}, universe={"s", "t"})
    q = ExactDistribution({"t": Fraction(1)}, universe={"s", "t"})
    assert tvd(p, p) == 0
    assert tvd(p, q) == 1
    with pytest.raises(ValueError):
        tvd(p, ExactDistribution({"s": Fraction(1)}))


def test_enumeration_is_dyadic_and_normalized():
    grid, dist = four_point()
    for k in (1, 5, 9):
        p = enumerate_process(grid, dist, ONE_BIT, k)
        assert p.total() == 1
        for v in p.probs.values():
            assert (2**k) % v.denominator == 0


def test_bottom_mass_shrinks_with_depth():
    grid, dist = four_point()
    ps = enumerate_depths(grid, dist, ONE_BIT, 12)
    bottoms = [p[BOTTOM] for p in ps]
    assert all(b2 <= b1 for b1, b2 in zip(bottoms, bottoms[1:]))
    assert enumerate_process(grid, dist, ONE_BIT, 6)[BOTTOM] == bottoms[5]


def test_point_bound_on_four_point_grid():
    grid, dist = four_point()
    p = enumerate_process(grid, dist, ONE_BIT, 12)
    q = exact_rounded_distribution(grid, dist)
    for s in grid.enumerate():
        assert p[s] <= q[s]
    assert tvd(p, q) == p[BOTTOM]


def test_piecewise_linear_distribution():
    d = PiecewiseLinearDistribution([(-2, 0), (0, Fraction(1, 2)), (2, 1)], slack_bits=4)
    assert d.cdf_exact(BigFloat(0)) == Fraction(1, 2)
    assert d.cdf_exact(BigFloat(1)) == Fraction(3, 4)
    assert d.inv_cdf_exact(Fraction(3, 4)) == 1
    e = d.interval_inv_cdf(BigFloat(1, -2), BigFloat(3, -2), 20)
    assert e.lo.to_fraction() <= -1 and e.hi.to_fraction() >= 1
    with pytest.raises(ValueError):
        PiecewiseLinearDistribution([(0, 0), (1, Fraction(1, 2))])
    with pytest.raises(ValueError):
        PiecewiseLinearDistribution([(0, 0), (Fraction(1, 3), 1)])


def test_laplace_q_bounds_are_tight():
    grid = ToyGrid([-1, 0, 1])
    qb = rounded_distribution_bounds(grid, LaplaceDistribution(), 128)
    for s in grid.enumerate():
        lo, hi = qb[s]
        assert 0 <= lo <= hi and hi - lo < Fraction(1, 2**40)
    assert abs(sum(lo for lo, _ in qb.values()) - 1) < Fraction(1, 2**40)


def test_toy_configurations_cover_requirements():
    confs = toy_configurations()
    assert len(confs) >= 5
    assert sum(c.exact for c in confs) >= 5
    assert all(c.cfg.chunk_bits == 1 for c in confs)
    assert all(c.grid.size() <= 32 for c in confs)
    # one configuration puts a grid point exactly at the median
    def has_median_point(c):
        return any(c.dist.cdf_exact(p) == Fraction(1, 2) for p in c.grid.points) if c.exact else False
    assert any(has_median_point(c) for c in confs)


def test_check_toy_config_quick():
    rep = check_toy_config(toy_configurations()[0], (2, 4, 6))
    assert rep.passed and rep.depths == [2, 4, 6]
    assert rep.to_dict()["passed"] is True


def test_enumeration_limits():
    grid, dist = four_point()
    with pytest.raises(ValueError):
        enumerate_process(grid, dist, SamplerConfig(chunk_bits=8), 4)
    from refine_dp.float_grid import BINARY64

    with pytest.raises(OverflowError):
        enumerate_process(BINARY64, dist, ONE_BIT, 2)


def test_bench_report():
    rep = bench(STD, n=10_000, seed=1)
    assert rep.n == 10_000 and sum(rep.histogram.values()) == 10_000
    assert rep.fractions[1] >= 0.95
    assert {"platform", "python", "cpu_count"} <= set(rep.machine)
    assert rep.to_csv().startswith("iterations,count,fraction")
    assert rep.seed == 1
    with pytest.raises(ValueError):
        bench(STD, n=0)
    with pytest.raises(ValueError):
        bench(STD, n=100)


def test_bench_single_bit_chunks_need_many_iterations():
    rep = bench(STD, SamplerConfig(chunk_bits=1), n=10_000, seed=2)
    mean = sum(k * f for k, f in rep.fractions.items())
    assert 20 <= mean <= 100
