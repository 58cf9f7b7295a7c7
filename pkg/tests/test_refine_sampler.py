import io
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ceil_to_double, laplace_quantile_mp, mpf_to_fraction
from refine_dp.exact_arith import BigFloat, Enclosure
from refine_dp.float_grid import BINARY64, ToyGrid, is_on_grid_multiple, lowest_set_bit_exponent, next_float_up
from refine_dp.harness import PiecewiseLinearDistribution
from refine_dp.inverse_cdf import LaplaceDistribution, LaplaceParams
from refine_dp.refine_sampler import (
    BOTTOM,
    BitTape,
    Bottom,
    SamplerConfig,
    SamplerOverflow,
    TapeExhausted,
    bisect_step,
    chunk_index,
    read_traces,
    refine,
    sample_laplace,
    sample_laplace_float,
    tape_from_traces,
    terminate_check,
    write_traces,
)

STD = LaplaceParams(0, 1)


def test_config_validation_and_schedule():
    cfg = SamplerConfig()
    assert (cfg.chunk_bits, cfg.base_prec, cfg.prec_step, cfg.max_iterations) == (63, 64, 1, 64)
    assert cfg.precision(1) == 64 + 63
    assert cfg.precision(3) == 64 + 3 * 63
    for bad in (dict(chunk_bits=0), dict(chunk_bits=64), dict(base_prec=8), dict(prec_step=0), dict(max_iterations=0), dict(overflow_mode="wrap")):
        with pytest.raises(ValueError):
            SamplerConfig(**bad)


def test_tapes():
    t = BitTape.replay("1011")
    assert t.read(3) == 0b101 and t.position == 3 and t.remaining == 1
    with pytest.raises(TapeExhausted):
        t.read(2)
    assert BitTape.replay_int(5, 4).read(4) == 5
    with pytest.raises(ValueError):
        BitTape.replay("012")
    s1, s2 = BitTape.seeded(1, record=True), BitTape.seeded(1)
    assert s1.read(63) == s2.read(63)
    assert len(s1.consumed()) == 63
    assert BitTape.live().mode == "live" and "test-only" in BitTape.seeded(0).label


def test_bisect_step_examples():
    half = BigFloat(1, -1)
    assert bisect_step(0, 1, chunk_index(0, 1), 1) == (half, BigFloat(1))
    assert bisect_step(0, 1, chunk_index(1, 1), 1) == (BigFloat(0), half)
    assert bisect_step(0, 1, 5, 3) == (BigFloat(5, -3), BigFloat(6, -3))


@given(st.integers(min_value=0, max_value=2**20 - 1), st.integers(min_value=1, max_value=20), st.integers(min_value=1, max_value=8))
def test_bisect_step_widths(a_man, m, c):
    a_man %= 1 << m
    a, b = BigFloat(a_man, -m), BigFloat(a_man + 1, -m)
    for i in range(1 << c):
        lo, hi = bisect_step(a, b, i, c)
        assert (hi - lo).to_fraction() == Fraction(1, 2 ** (m + c))
        assert a <= lo and hi <= b


def test_terminate_check_examples():
    e = Enclosure(BigFloat((1 << 60) + 1, -60), BigFloat((1 << 59) + 1, -59))
    assert terminate_check(e) == 1 + 2.0**-52
    straddle = Enclosure(BigFloat((1 << 60) - 1, -60), BigFloat((1 << 60) + 1, -60))
    assert terminate_check(straddle) is None
    assert terminate_check(Enclosure(BigFloat(3, -2), BigFloat(3, -2))) == 0.75


def test_determinism():
    a = sample_laplace(STD, tape=BitTape.seeded(5), with_trace=True)
    b = sample_laplace(STD, tape=BitTape.seeded(5), with_trace=True)
    assert a[0] == b[0]
    assert a[1] == b[1]


def test_traced_outputs_round_from_both_ends():
    rng = random.Random(1)
    for _ in range(300):
        tr = refine(LaplaceDistribution(), None, BitTape.from_random(rng), record=True)
        last = tr.records[-1].enclosure
        assert BINARY64.round_up(last.lo) == BINARY64.round_up(last.hi) == tr.output
        a, b = tr.final_interval
        for end in (a, b):
            q = mpf_to_fraction(laplace_quantile_mp(end.to_fraction(), prec=256))
            assert ceil_to_double(q) == tr.output


def test_trace_nesting():
    rng = random.Random(4)
    cfg = SamplerConfig(chunk_bits=4)
    for _ in range(200):
        tr = refine(LaplaceDistribution(BigFloat(1), BigFloat(1, -3)), cfg, BitTape.from_random(rng), record=True)
        for prev, cur in zip(tr.records, tr.records[1:]):
            assert prev.a <= cur.a and cur.b <= prev.b
            assert (cur.b - cur.a).to_fraction() * 16 == (prev.b - prev.a).to_fraction()
            # enclosures nest up to the rounding slack of the earlier one
            slack = BigFloat(1, -prev.prec + 8)
            assert cur.enclosure.lo >= prev.enclosure.lo - slack
            assert cur.enclosure.hi <= prev.enclosure.hi + slack


def test_further_iterations_do_not_change_output():
    rng = random.Random(8)
    d = LaplaceDistribution()
    for _ in range(200):
        bits = format(rng.getrandbits(63 * 4), f"0{63 * 4}b")
        tr = refine(d, None, BitTape.replay(bits))
        # keep refining past termination by hand
        A, m = tr.final_index, tr.n_iterations * 63
        cfg = SamplerConfig()
        for k in range(tr.n_iterations + 1, 5):
            A = (A << 63) | chunk_index(int(bits[63 * (k - 1): 63 * k], 2), 63)
            m += 63
            e = d.interval_inv_cdf(BigFloat(A, -m), BigFloat(A + 1, -m), cfg.precision(k))
            assert terminate_check(e) == tr.output


def test_shift_consistency():
    # the grid near x refines the grid near x + 1024 when |x| < 512, so the
    # shifted sample is the exact shift of x rounded up; float x + 1024
    # rounds to nearest instead and agrees only when x is on the coarser grid
    rng = random.Random(12)
    exact_hits = 0
    for _ in range(500):
        bits = format(rng.getrandbits(63 * 3), f"0{63 * 3}b")
        x = sample_laplace(STD, tape=BitTape.replay(bits))
        y = sample_laplace(LaplaceParams(1024, 1), tape=BitTape.replay(bits))
        assert abs(x) < 512
        assert y == next_float_up(BigFloat.from_float(x) + BigFloat(1024))
        if is_on_grid_multiple(x, lowest_set_bit_exponent(math.ulp(y))):
            assert y == x + 1024
            exact_hits += 1
    assert exact_hits > 0


def test_chunk_equivalence():
    rng = random.Random(21)
    d = LaplaceDistribution(BigFloat(-1, -1), BigFloat(3, -1))
    for _ in range(200):
        bits = format(rng.getrandbits(63 * 4), f"0{63 * 4}b")
        big = refine(d, SamplerConfig(chunk_bits=63, base_prec=200), BitTape.replay(bits))
        small = refine(d, SamplerConfig(chunk_bits=1, base_prec=200, max_iterations=252), BitTape.replay(bits))
        assert small.output == big.output
        # the 1-bit run stops no later than the chunked one
        assert small.n_iterations <= big.n_iterations * 63
        n = small.n_iterations
        assert big.final_index >> (big.n_iterations * 63 - n) == small.final_index


def test_initial_interval_probability_on_toy_grid():
    grid = ToyGrid([-1, 0, 1])
    dist = PiecewiseLinearDistribution([(-2, 0), (2, 1)], slack_bits=40)
    cfg = SamplerConfig(chunk_bits=1, base_prec=16, max_iterations=6)
    counts = {}
    for v in range(1 << 6):
        tr = refine(dist, cfg, BitTape.replay_int(v, 6), grid, record=True)
        for r in tr.records:
            key = (r.k, r.a, r.b)
            counts[key] = counts.get(key, 0) + 1
    for (k, a, b), c in counts.items():
        # tapes reaching J at round k: those whose first k bits select J
        reached_fraction = Fraction(c, 1 << 6)
        assert reached_fraction <= (b - a).to_fraction()
        assert (b - a).to_fraction() == Fraction(1, 2**k)


def test_bottom_and_overflow():
    tape = BitTape.replay("1" * 10)
    cfg = SamplerConfig(chunk_bits=1, max_iterations=3)
    with pytest.raises(Bottom) as info:
        sample_laplace(STD, cfg, tape)
    assert info.value.trace.output is BOTTOM
    assert info.value.trace.n_iterations == 3
    huge = LaplaceParams(BigFloat.from_float(1.7976931348623157e308), BigFloat(1, 1000))
    bits = "0" + "0" * 62
    out = sample_laplace(huge, SamplerConfig(), BitTape.replay(bits * 2))
    assert out == math.inf
    with pytest.raises(SamplerOverflow):
        sample_laplace(huge, SamplerConfig(overflow_mode="error"), BitTape.replay(bits * 2))


def test_float_entry_point():
    x = sample_laplace_float(0.5, 2.0, tape=BitTape.seeded(3))
    y = sample_laplace(LaplaceParams(BigFloat(1, -1), BigFloat(2)), tape=BitTape.seeded(3))
    assert x == y


def test_trace_round_trip_and_replay():
    rng = random.Random(31)
    cfg = SamplerConfig(chunk_bits=7, base_prec=40)
    params = LaplaceParams(BigFloat(5, -3), BigFloat(3))
    d = LaplaceDistribution.from_params(params)
    traces = [refine(d, cfg, BitTape.from_random(rng), record=True) for _ in range(50)]
    buf = io.StringIO()
    write_traces(buf, cfg, params, traces)
    text = buf.getvalue()
    parsed = read_traces(io.StringIO(text))
    assert parsed.cfg == cfg
    assert all(p == params for p in parsed.params)
    for a, b in zip(traces, parsed.traces):
        assert a.output == b.output and a.records == b.records and a.final_index == b.final_index
    again = io.StringIO()
    write_traces(again, parsed.cfg, params, parsed.traces)
    assert again.getvalue() == text
    tape = tape_from_traces(parsed.traces)
    replayed = [refine(d, cfg, tape, record=True) for _ in range(50)]
    assert [t.output for t in replayed] == [t.output for t in traces]


def test_read_traces_rejects_garbage():
    with pytest.raises(ValueError):
        read_traces(io.StringIO("hello\n"))
