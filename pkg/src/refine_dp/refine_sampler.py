"""The interval-refining sampler.

The sampler draws a uniform ``U`` one chunk of bits at a time, as a nested
sequence of dyadic intervals ``[a, b]`` of ``[0, 1]``.  After each chunk it
asks the distribution for an enclosure ``[s, t]`` of ``F^-1([a, b])`` and
stops as soon as both ends round up to the same grid point.  Once an
enclosure sits inside a single rounding preimage, later chunks cannot change
the answer, so stopping there gives exactly ``round_up(F^-1(U))``.

Chunk convention: a chunk of ``c`` tape bits ``b_1..b_c`` selects subinterval
``i = sum((1 - b_j) * 2**(c - j))`` of the ``2**c`` equal parts.  With
``c = 1`` a 0 bit keeps the upper half and a 1 bit the lower half, and a
run with ``c`` bits per chunk equals a run with 1 bit per chunk on the same
tape.
"""

from __future__ import annotations

import random
import re
import secrets
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

from .exact_arith import BigFloat, Enclosure
from .float_grid import BINARY64, RoundingGrid
from .inverse_cdf import IntervalDistribution, LaplaceDistribution, LaplaceParams

__all__ = [
    "SamplerConfig",
    "BitTape",
    "TapeExhausted",
    "IterationRecord",
    "SampleTrace",
    "BOTTOM",
    "Bottom",
    "SamplerOverflow",
    "chunk_index",
    "bisect_step",
    "terminate_check",
    "refine",
    "sample_laplace",
    "sample_laplace_float",
    "write_traces",
    "read_traces",
    "tape_from_traces",
]


class _BottomType:
    """The non-termination outcome of an iteration-capped run."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"

    def __reduce__(self):
        return (_BottomType, ())


BOTTOM = _BottomType()


class Bottom(Exception):
    """Raised when the iteration cap is reached before termination."""

    def __init__(self, trace: "SampleTrace"):
        super().__init__(f"no termination within {trace.n_iterations} iterations")
        self.trace = trace


class SamplerOverflow(OverflowError):
    """Raised in ``overflow_mode='error'`` when the sample rounds to an infinity."""


class TapeExhausted(EOFError):
    """A replay tape ran out of recorded bits."""


@dataclass(frozen=True)
class SamplerConfig:
    """Chunking and precision schedule.

    Iteration ``k`` (starting at 1) runs at ``base_prec + k * prec_step * chunk_bits``
    bits.  ``max_iterations=None`` means no cap.
    """

    chunk_bits: int = 63
    base_prec: int = 64
    prec_step: int = 1
    max_iterations: int | None = 64
    overflow_mode: str = "infinity"

    def __post_init__(self):
        if not 1 <= self.chunk_bits <= 63:
            raise ValueError("chunk_bits must be in [1, 63]")
        if self.base_prec < 16:
            raise ValueError("base_prec must be at least 16")
        if self.prec_step < 1:
            raise ValueError("prec_step must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive or None")
        if self.overflow_mode not in ("infinity", "error"):
            raise ValueError("overflow_mode must be 'infinity' or 'error'")

    def precision(self, k: int) -> int:
        return self.base_prec + k * self.prec_step * self.chunk_bits


class BitTape:
    """A stream of uniform random bits, read most-significant first.

    Live tapes draw from :mod:`secrets`.  Seeded tapes use
    :class:`random.Random` and are for tests only.  Replay tapes consume a
    recorded bit string and raise :class:`TapeExhausted` when it runs out.
    A tape belongs to one sampler at a time.
    """

    def __init__(self, source=None, *, record: bool = False, label: str = "live"):
        self._source = source
        self._replay: str | None = None
        self._pos = 0
        self.label = label
        self._record: list[tuple[int, int]] | None = [] if record else None

    @classmethod
    def live(cls, record: bool = False) -> "BitTape":
        return cls(None, record=record, label="live")

    @classmethod
    def seeded(cls, seed, record: bool = False) -> "BitTape":
        return cls(random.Random(seed), record=record, label="seeded (test-only)")

    @classmethod
    def from_random(cls, rng: random.Random, record: bool = False) -> "BitTape":
        return cls(rng, record=record, label="seeded (test-only)")

    @classmethod
    def replay(cls, bits) -> "BitTape":
        """Replay a bit string such as ``"0110"`` or an iterable of 0/1."""
        if not isinstance(bits, str):
            bits = "".join("1" if b else "0" for b in bits)
        if bits.strip("01"):
            raise ValueError("replay tapes hold only '0' and '1'")
        tape = cls(None, label="replay")
        tape._replay = bits
        return tape

    @classmethod
    def replay_int(cls, value: int, nbits: int) -> "BitTape":
        return cls.replay(format(value, f"0{nbits}b") if nbits else "")

    @property
    def mode(self) -> str:
        return "replay" if self._replay is not None else "live"

    def read(self, n: int) -> int:
        if self._replay is not None:
            end = self._pos + n
            if end > len(self._replay):
                raise TapeExhausted(f"replay tape exhausted at bit {self._pos}")
            v = int(self._replay[self._pos:end], 2)
            self._pos = end
        elif self._source is None:
            v = secrets.randbits(n)
        else:
            v = self._source.getrandbits(n)
        if self._record is not None:
            self._record.append((v, n))
        return v

    @property
    def position(self) -> int:
        if self._replay is not None:
            return self._pos
        return sum(n for _, n in self._record or ())

    @property
    def remaining(self) -> int | None:
        if self._replay is None:
            return None
        return len(self._replay) - self._pos

    def consumed(self) -> str:
        """The bits read so far (replay tapes, or tapes created with ``record=True``)."""
        if self._replay is not None:
            return self._replay[: self._pos]
        if self._record is None:
            raise ValueError("tape was not recording")
        return "".join(format(v, f"0{n}b") for v, n in self._record)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    a: BigFloat
    b: BigFloat
    prec: int
    enclosure: Enclosure


@dataclass
class SampleTrace:
    """Outcome of one sampler run.

    ``output`` is a grid point or :data:`BOTTOM`.  ``records`` is filled only
    when the run was asked to record.
    """

    output: object
    n_iterations: int
    chunk_bits: int
    final_index: int
    records: list[IterationRecord] = field(default_factory=list)
    label: str = ""

    @property
    def bottom(self) -> bool:
        return self.output is BOTTOM

    @property
    def final_interval(self) -> tuple[BigFloat, BigFloat]:
        m = self.n_iterations * self.chunk_bits
        return BigFloat(self.final_index, -m), BigFloat(self.final_index + 1, -m)

    def tape_bits(self) -> str:
        """Tape bits consumed by this run, recovered from the final interval."""
        m = self.n_iterations * self.chunk_bits
        if not m:
            return ""
        return format(self.final_index ^ ((1 << m) - 1), f"0{m}b")


def chunk_index(bits: int, c: int) -> int:
    """Subinterval index selected by ``c`` tape bits."""
    return bits ^ ((1 << c) - 1)


def bisect_step(a, b, index: int, c: int = 1) -> tuple[BigFloat, BigFloat]:
    """Subinterval ``index`` of ``2**c`` equal parts of ``[a, b]`` (exact)."""
    a, b = BigFloat.coerce(a), BigFloat.coerce(b)
    if not 0 <= index < (1 << c):
        raise ValueError("index out of range")
    w = (b - a).scale2(-c)
    return a + w * index, a + w * (index + 1)


def terminate_check(enclosure: Enclosure, grid: RoundingGrid = BINARY64):
    """Common round-up point of both enclosure ends, or ``None``."""
    s = grid.round_up(enclosure.lo)
    if s == grid.round_up(enclosure.hi):
        return s
    return None


def refine(
    dist: IntervalDistribution,
    cfg: SamplerConfig | None = None,
    tape: BitTape | None = None,
    grid: RoundingGrid = BINARY64,
    record: bool = False,
) -> SampleTrace:
    """Run the refining sampler once and return its trace.

    Reaching ``cfg.max_iterations`` yields a trace whose output is
    :data:`BOTTOM`.
    """
    if cfg is None:
        cfg = SamplerConfig()
    if tape is None:
        tape = BitTape.live()
    c = cfg.chunk_bits
    mask = (1 << c) - 1
    step = cfg.prec_step * c
    prec = cfg.base_prec
    cap = cfg.max_iterations
    inv = dist.interval_inv_cdf
    round_up = grid.round_up
    records: list[IterationRecord] = []
    A = 0
    m = 0
    k = 0
    while cap is None or k < cap:
        k += 1
        A = (A << c) | (tape.read(c) ^ mask)
        m += c
        prec += step
        a = BigFloat(A, -m)
        b = BigFloat(A + 1, -m)
        enc = inv(a, b, prec)
        s = round_up(enc.lo)
        t = round_up(enc.hi)
        if record:
            records.append(IterationRecord(k, a, b, prec, enc))
        if s == t:
            if cfg.overflow_mode == "error" and s in (float("inf"), float("-inf")):
                raise SamplerOverflow(f"sample rounds to {s}")
            return SampleTrace(s, k, c, A, records)
    return SampleTrace(BOTTOM, k, c, A, records)


def _laplace_dist(params) -> LaplaceDistribution:
    if isinstance(params, LaplaceDistribution):
        return params
    if isinstance(params, LaplaceParams):
        return LaplaceDistribution.from_params(params)
    mu, beta = params
    return LaplaceDistribution(mu, beta)


def sample_laplace(
    params,
    cfg: SamplerConfig | None = None,
    tape: BitTape | None = None,
    grid: RoundingGrid = BINARY64,
    with_trace: bool = False,
):
    """Sample Laplace(mu, beta) rounded up onto ``grid``.

    ``params`` is a :class:`LaplaceParams`, a :class:`LaplaceDistribution` or
    a ``(mu, beta)`` pair of exact values.  Raises :class:`Bottom` when the
    iteration cap is hit.  With ``with_trace=True`` returns ``(point, trace)``.
    """
    trace = refine(_laplace_dist(params), cfg, tape, grid, record=with_trace)
    if trace.output is BOTTOM:
        raise Bottom(trace)
    if with_trace:
        return trace.output, trace
    return trace.output


def sample_laplace_float(mu: float, beta: float, cfg: SamplerConfig | None = None, tape: BitTape | None = None) -> float:
    """Convenience entry point for double-valued parameters (converted exactly)."""
    return sample_laplace(LaplaceParams(BigFloat.from_float(mu), BigFloat.from_float(beta)), cfg, tape)


# ---------------------------------------------------------------------------
# Line-oriented trace format
#
#   trace v1 chunk_bits=63 base_prec=64 prec_step=1 max_iterations=64
#   sample mu=+0x0p+0 beta=+0x1p+0
#   iter k=1 a=+0x...p-63 b=+0x...p-63 prec=127 s=... t=...
#   out 0x3fe0000000000000        (IEEE bits of the double, or "bottom")

_KV = re.compile(r"(\w+)=(\S+)")


def _float_bits_hex(x: float) -> str:
    return "0x%016x" % struct.unpack("<Q", struct.pack("<d", x))[0]


def _float_from_bits_hex(text: str) -> float:
    return struct.unpack("<d", struct.pack("<Q", int(text, 16)))[0]


def write_traces(fh: TextIO, cfg: SamplerConfig, params: LaplaceParams, traces: Iterable[SampleTrace]) -> None:
    cap = "none" if cfg.max_iterations is None else cfg.max_iterations
    fh.write(
        f"trace v1 chunk_bits={cfg.chunk_bits} base_prec={cfg.base_prec} "
        f"prec_step={cfg.prec_step} max_iterations={cap}\n"
    )
    for tr in traces:
        fh.write(f"sample mu={params.mu.hex()} beta={params.beta.hex()}\n")
        for r in tr.records:
            fh.write(
                f"iter k={r.k} a={r.a.hex()} b={r.b.hex()} prec={r.prec} "
                f"s={r.enclosure.lo.hex()} t={r.enclosure.hi.hex()}\n"
            )
        if tr.output is BOTTOM:
            fh.write("out bottom\n")
        else:
            fh.write(f"out {_float_bits_hex(tr.output)}\n")


@dataclass
class ParsedTraces:
    cfg: SamplerConfig
    params: list[LaplaceParams]
    traces: list[SampleTrace]


def read_traces(fh: TextIO) -> ParsedTraces:
    """Parse a trace file written by :func:`write_traces`."""
    lines = iter(fh.read().splitlines())
    header = next(lines, "")
    if not header.startswith("trace v1"):
        raise ValueError("not a v1 trace file")
    h = dict(_KV.findall(header))
    cap = None if h["max_iterations"] == "none" else int(h["max_iterations"])
    cfg = SamplerConfig(int(h["chunk_bits"]), int(h["base_prec"]), int(h["prec_step"]), cap)
    params: list[LaplaceParams] = []
    traces: list[SampleTrace] = []
    records: list[IterationRecord] = []
    for line in lines:
        if not line.strip():
            continue
        kind, _, rest = line.partition(" ")
        if kind == "sample":
            kv = dict(_KV.findall(rest))
            params.append(LaplaceParams(BigFloat.from_hex(kv["mu"]), BigFloat.from_hex(kv["beta"])))
            records = []
        elif kind == "iter":
            kv = dict(_KV.findall(rest))
            records.append(
                IterationRecord(
                    int(kv["k"]),
                    BigFloat.from_hex(kv["a"]),
                    BigFloat.from_hex(kv["b"]),
                    int(kv["prec"]),
                    Enclosure(BigFloat.from_hex(kv["s"]), BigFloat.from_hex(kv["t"])),
                )
            )
        elif kind == "out":
            out = BOTTOM if rest.strip() == "bottom" else _float_from_bits_hex(rest.strip())
            n = len(records)
            m = n * cfg.chunk_bits
            index = (records[-1].a.to_fraction() * (1 << m)).numerator if n else 0
            traces.append(SampleTrace(out, n, cfg.chunk_bits, index, records))
        else:
            raise ValueError(f"unrecognized trace line: {line!r}")
    return ParsedTraces(cfg, params, traces)


def tape_from_traces(traces: Iterable[SampleTrace]) -> BitTape:
    """A replay tape reproducing the given runs back to back."""
    return BitTape.replay("".join(t.tape_bits() for t in traces))


def iter_samples(params, n: int, cfg: SamplerConfig | None = None, tape: BitTape | None = None) -> Iterator[SampleTrace]:
    dist = _laplace_dist(params)
    if tape is None:
        tape = BitTape.live()
    for _ in range(n):
        yield refine(dist, cfg, tape)
