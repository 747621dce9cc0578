import numpy as np
import pytest
from scipy import stats

from y00lab.channel import (
    ExactHeterodyne,
    GaussianPhase,
    Observation,
    Wedge,
    make_noise_model,
    observation_density,
    sample_observation,
    wedge_sigma,
)
from y00lab.constellation import circular_diff

from conftest import trapezoid_integral, wedge_breakpoints

ALL_MODELS = [
    Wedge(wedge_sigma(1.0e4)),
    Wedge(wedge_sigma(25.0)),
    GaussianPhase(wedge_sigma(1.0e4)),
    GaussianPhase(0.5),
    ExactHeterodyne(25.0),
    ExactHeterodyne(1.0e4),
]


class TestWedgeSigma:
    def test_values(self):
        assert wedge_sigma(1.0e4) == pytest.approx(0.01)
        assert wedge_sigma(1.5e4) == pytest.approx(8.165e-3, abs=1e-6)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            wedge_sigma(0.0)


class TestNormalization:
    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: repr(m))
    def test_density_integrates_to_one(self, model):
        breaks = wedge_breakpoints(model.sigma) if isinstance(model, Wedge) else ()
        got = trapezoid_integral(model.density_diff, breakpoints=breaks)
        assert got == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: repr(m))
    def test_density_nonnegative(self, model):
        grid = np.linspace(-np.pi, np.pi, 10_001)
        assert np.all(model.density_diff(grid) >= 0.0)


class TestWedge:
    def test_density_values(self):
        w = Wedge(0.1)
        assert w.density_diff(0.05) == pytest.approx(5.0)
        assert w.density_diff(0.2) == 0.0

    def test_tiny_sigma_reproduces_input(self, rng):
        w = Wedge(1e-12)
        theta = rng.uniform(0, 2 * np.pi, 1000)
        obs = sample_observation(theta, w, rng)
        assert np.max(np.abs(circular_diff(obs.theta, theta))) <= 1e-12 + 1e-9

    def test_sample_support(self, rng):
        w = Wedge(0.3)
        obs = w.sample(np.zeros(100_000), rng)
        d = circular_diff(obs, 0.0)
        assert np.max(np.abs(d)) <= 0.3
        # uniform within the wedge
        res = stats.kstest((d + 0.3) / 0.6, "uniform")
        assert res.pvalue > 1e-3

    def test_sigma_bounds(self):
        with pytest.raises(ValueError):
            Wedge(0.0)
        with pytest.raises(ValueError):
            Wedge(np.pi)


class TestGaussianPhase:
    def test_wrapped_density_matches_wide_sum(self):
        g = GaussianPhase(0.8)
        grid = np.linspace(-np.pi, np.pi, 101)
        ref = np.zeros_like(grid)
        for k in range(-20, 21):
            ref += stats.norm.pdf(grid + 2 * np.pi * k, scale=0.8)
        assert np.allclose(g.density_diff(grid), ref, atol=1e-12)

    def test_sample_std(self, rng):
        g = GaussianPhase(0.05)
        d = circular_diff(g.sample(np.zeros(200_000), rng), 0.0)
        assert np.std(d) == pytest.approx(0.05, rel=0.02)


class TestExactHeterodyne:
    def test_large_S_phase_std(self, rng):
        S = 1.0e6
        h = ExactHeterodyne(S)
        d = circular_diff(h.sample(np.full(100_000, 1.0), rng), 1.0)
        assert np.std(d) == pytest.approx(1.0 / np.sqrt(2 * S), rel=0.05)

    def test_raw_quadratures_recorded(self, rng):
        h = ExactHeterodyne(100.0)
        obs = sample_observation(np.zeros(10), h, rng)
        assert obs.raw is not None
        i, q = obs.raw
        assert np.allclose(np.arctan2(q, i) % (2 * np.pi), obs.theta)

    def test_density_matches_histogram(self, rng):
        # self-consistency: sampled phases vs the closed-form density
        h = ExactHeterodyne(25.0)
        n, bins = 1_000_000, 256
        d = circular_diff(h.sample(np.zeros(n), rng), 0.0)
        edges = np.linspace(-np.pi, np.pi, bins + 1)
        counts, _ = np.histogram(d, bins=edges)
        centers = (edges[:-1] + edges[1:]) / 2
        width = edges[1] - edges[0]
        # bin probability via 8-point midpoint rule inside each bin
        sub = centers[:, None] + (np.arange(8)[None, :] - 3.5) / 8 * width
        p = h.density_diff(sub).mean(axis=1) * width
        se = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 4.0 * np.maximum(se, 1.0))

    def test_chi_square_agreement(self, rng):
        h = ExactHeterodyne(25.0)
        n, bins = 200_000, 64
        d = circular_diff(h.sample(np.zeros(n), rng), 0.0)
        edges = np.linspace(-np.pi, np.pi, bins + 1)
        counts, _ = np.histogram(d, bins=edges)
        centers = (edges[:-1] + edges[1:]) / 2
        width = edges[1] - edges[0]
        sub = centers[:, None] + (np.arange(16)[None, :] - 7.5) / 16 * width
        p = h.density_diff(sub).mean(axis=1)
        p = p / p.sum()
        res = stats.chisquare(counts, n * p)
        assert res.pvalue > 1e-3


class TestObservation:
    def test_noiseless_channel_is_identity(self, rng):
        theta = rng.uniform(0, 2 * np.pi, 100)
        obs = sample_observation(theta, None, rng)
        assert np.allclose(obs.theta, theta)
        assert obs.raw is None

    def test_reproducible_with_same_seed(self):
        theta = np.linspace(0, 6, 50)
        a = sample_observation(theta, Wedge(0.1), np.random.default_rng(5))
        b = sample_observation(theta, Wedge(0.1), np.random.default_rng(5))
        assert np.array_equal(a.theta, b.theta)

    def test_density_requires_a_model(self):
        with pytest.raises(ValueError):
            observation_density(0.0, 0.0, None)

    def test_density_depends_on_difference_only(self):
        g = GaussianPhase(0.3)
        assert observation_density(1.0, 0.4, g) == pytest.approx(
            observation_density(4.0, 3.4, g)
        )


class TestFactory:
    def test_kinds(self):
        assert make_noise_model("none", 100.0) is None
        assert make_noise_model("wedge", 1e4) == Wedge(0.01)
        assert make_noise_model("gaussian", 1e4, sigma=0.2) == GaussianPhase(0.2)
        assert make_noise_model("heterodyne", 100.0) == ExactHeterodyne(100.0)

    def test_heterodyne_rejects_sigma(self):
        with pytest.raises(ValueError):
            make_noise_model("heterodyne", 100.0, sigma=0.1)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_noise_model("laplace", 100.0)
