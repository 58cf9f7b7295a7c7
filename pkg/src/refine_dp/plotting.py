"""Figures for CLI reports, rendered to files with the Agg backend."""

from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .exact_arith import BigFloat  # noqa: E402

__all__ = [
    "plot_iteration_histogram",
    "plot_fit",
    "plot_bottom_decay",
    "plot_attack",
    "plot_refinement",
]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _log2_width(lo: BigFloat, hi: BigFloat) -> float:
    if lo.special or hi.special:
        return math.inf
    w = (hi - lo).to_fraction()
    if w == 0:
        return -math.inf
    return math.log2(w.numerator) - math.log2(w.denominator)


def plot_iteration_histogram(report, path) -> Path:
    """Bar chart of iterations-to-terminate from a :class:`BenchReport`."""
    ks = sorted(report.histogram)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(k) for k in ks], [report.fractions[k] for k in ks], color="tab:blue")
    ax.set_yscale("log")
    ax.set_xlabel("iterations")
    ax.set_ylabel("fraction of samples")
    ax.set_title(f"chunk_bits={report.chunk_bits}, n={report.n}, {report.samples_per_second:,.0f} samples/s")
    return _save(fig, path)


def plot_fit(report, path) -> Path:
    """Observed vs expected bucket counts and per-bucket z-scores from a :class:`FitReport`."""
    idx = range(report.buckets)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.bar(idx, report.counts, color="tab:gray", label="observed")
    ax1.plot(idx, report.expected, "r.-", label="expected")
    ax1.set_ylabel("count")
    ax1.legend()
    ax1.set_title(f"chi2={report.chi2:.1f}, dof={report.dof}, p={report.p_value:.3g}")
    ax2.bar(idx, report.z_scores, color="tab:blue")
    for z in (-3, 3):
        ax2.axhline(z, color="r", lw=0.8, ls="--")
    ax2.set_xlabel("bucket")
    ax2.set_ylabel("z")
    return _save(fig, path)


def plot_bottom_decay(reports: Sequence, path) -> Path:
    """``P_k(BOTTOM)`` against ``k`` for each toy configuration."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in reports:
        ys = [float(Fraction(p)) for p in rep.p_bottom]
        ax.semilogy(rep.depths, [max(y, 1e-300) for y in ys], "o-", label=rep.name)
    ax.set_xlabel("k (rounds)")
    ax.set_ylabel("P_k(bottom)")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_attack(report, path) -> Path:
    """Distinguishing-event fraction per input from an :class:`AttackReport`."""
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = [str(x) for x in report.inputs]
    ax.bar(labels, report.fractions, color=["tab:blue", "tab:orange"][: len(labels)])
    ax.set_ylim(0, max(0.05, max(report.fractions) * 1.2))
    ax.set_ylabel("fraction of distinguishing events")
    ax.set_title(f"{report.mechanism}: {report.verdict}", fontsize=9)
    return _save(fig, path)


def plot_refinement(trace, path) -> Path:
    """Widths of the dyadic interval and of its image enclosure per iteration.

    ``trace`` must have been recorded with per-iteration records.
    """
    if not trace.records:
        raise ValueError("trace has no iteration records")
    ks = [r.k for r in trace.records]
    dyadic = [_log2_width(r.a, r.b) for r in trace.records]
    image = [_log2_width(r.enclosure.lo, r.enclosure.hi) for r in trace.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, dyadic, "o-", label="log2 width [a, b]")
    finite = [(k, w) for k, w in zip(ks, image) if math.isfinite(w)]
    if finite:
        ax.plot(*zip(*finite), "s-", label="log2 width [s, t]")
    ax.set_xlabel("iteration")
    ax.set_ylabel("log2 width")
    ax.set_title(f"output {trace.output!r}")
    ax.legend()
    return _save(fig, path)
