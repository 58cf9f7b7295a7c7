"""Correctly rounded noise sampling for differential privacy by interval refining.

The sampler bisects a dyadic interval of ``[0, 1]`` and maps it through an
enclosure of the inverse CDF until the whole image rounds up to a single
double.  The output is then exactly ``round_up(X)`` for ``X`` drawn from the
target distribution, so no output carries a precision fingerprint of the
input.
"""

from .exact_arith import BigFloat, Enclosure, div_rounded, exp_enclosure, ln_enclosure, midpoint
from .float_grid import BINARY64, Binary64Grid, RoundingGrid, ToyGrid, decompose, next_float_up, ulp
from .inverse_cdf import IntervalDistribution, LaplaceDistribution, LaplaceParams
from .mechanisms import PrivacyBudget, laplace_mechanism, noisy_argmax
from .refine_sampler import (
    BOTTOM,
    BitTape,
    Bottom,
    SamplerConfig,
    SampleTrace,
    refine,
    sample_laplace,
    sample_laplace_float,
)

__version__ = "0.1.0"

__all__ = [
    "BigFloat",
    "Enclosure",
    "div_rounded",
    "exp_enclosure",
    "ln_enclosure",
    "midpoint",
    "BINARY64",
    "Binary64Grid",
    "RoundingGrid",
    "ToyGrid",
    "decompose",
    "next_float_up",
    "ulp",
    "IntervalDistribution",
    "LaplaceDistribution",
    "LaplaceParams",
    "PrivacyBudget",
    "laplace_mechanism",
    "noisy_argmax",
    "BOTTOM",
    "BitTape",
    "Bottom",
    "SamplerConfig",
    "SampleTrace",
    "refine",
    "sample_laplace",
    "sample_laplace_float",
]
