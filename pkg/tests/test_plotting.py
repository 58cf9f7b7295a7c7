import random

import pytest

from refine_dp.attacks import run_additive_attack
from refine_dp.harness import bench, check_toy_config, equal_probability_buckets, goodness_of_fit, toy_configurations
from refine_dp.inverse_cdf import LaplaceDistribution, LaplaceParams
from refine_dp.plotting import plot_attack, plot_bottom_decay, plot_fit, plot_iteration_histogram, plot_refinement
from refine_dp.refine_sampler import BitTape, SamplerConfig, refine

PNG_MAGIC = b"\x89PNG"


def is_png(path):
    return path.read_bytes()[:4] == PNG_MAGIC


def test_all_figures_render(tmp_path):
    samples = []
    b = bench(LaplaceParams(0, 1), n=20_000, seed=1, samples_out=samples)
    fit = goodness_of_fit(samples, LaplaceParams(0, 1), equal_probability_buckets(LaplaceParams(0, 1), 10))
    ver = [check_toy_config(c, (2, 4, 6)) for c in toy_configurations()[:2]]
    att = run_additive_attack(n=2000, seed=1)
    tr = refine(LaplaceDistribution(), SamplerConfig(chunk_bits=1), BitTape.from_random(random.Random(1)), record=True)
    paths = [
        plot_iteration_histogram(b, tmp_path / "it.png"),
        plot_fit(fit, tmp_path / "fit.png"),
        plot_bottom_decay(ver, tmp_path / "sub" / "bot.png"),
        plot_attack(att, tmp_path / "att.png"),
        plot_refinement(tr, tmp_path / "ref.png"),
    ]
    assert all(is_png(p) for p in paths)


def test_refinement_needs_records(tmp_path):
    tr = refine(LaplaceDistribution(), None, BitTape.seeded(1))
    with pytest.raises(ValueError):
        plot_refinement(tr, tmp_path / "x.png")
