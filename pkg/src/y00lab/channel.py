"""Measurement noise on the phase: the channel density p(theta | theta_r).

Three built-in models:

* Wedge -- observed phase uniform within one standard deviation of the
  input and zero outside (the piecewise-constant envelope used throughout
  the defense analysis).
* GaussianPhase -- wrapped Gaussian phase noise.
* ExactHeterodyne -- both quadratures measured with variance 1/2 per
  component around the amplitude-sqrt(S) signal; the observation is the
  argument of the noisy pair, whose marginal density is evaluated in
  closed form.

A model of None stands for the noiseless (delta-kernel) channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .constellation import circular_diff, wrap_angle

TWO_PI = 2.0 * np.pi

# wrapped-Gaussian sum truncated here; error < 1e-30 for every sigma in use
_WRAP_TURNS = 3


def wedge_sigma(S: float) -> float:
    """Phase-noise standard deviation 1/sqrt(S) used for the wedge model."""
    if not S > 0:
        raise ValueError("S must be positive")
    return 1.0 / np.sqrt(S)


class NoiseModel:
    """Circularly symmetric measurement channel: density and sampler both
    depend only on the difference theta - theta_in."""

    def sample(self, theta_in, rng):
        raise NotImplementedError

    def density_diff(self, delta):
        """Density of the circular difference theta - theta_in."""
        raise NotImplementedError


@dataclass(frozen=True)
class Wedge(NoiseModel):
    sigma: float

    def __post_init__(self):
        if not 0 < self.sigma < np.pi:
            raise ValueError("wedge half-width must lie in (0, pi)")

    def sample(self, theta_in, rng):
        theta_in = np.asarray(theta_in, dtype=float)
        u = rng.uniform(-self.sigma, self.sigma, size=theta_in.shape)
        return wrap_angle(theta_in + u)

    def density_diff(self, delta):
        delta = np.abs(np.asarray(circular_diff(delta, 0.0)))
        return np.where(delta <= self.sigma, 1.0 / (2.0 * self.sigma), 0.0)[()]


@dataclass(frozen=True)
class GaussianPhase(NoiseModel):
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def sample(self, theta_in, rng):
        theta_in = np.asarray(theta_in, dtype=float)
        return wrap_angle(theta_in + rng.normal(0.0, self.sigma, theta_in.shape))

    def density_diff(self, delta):
        delta = np.asarray(circular_diff(delta, 0.0))
        total = np.zeros_like(delta, dtype=float)
        for k in range(-_WRAP_TURNS, _WRAP_TURNS + 1):
            z = (delta + TWO_PI * k) / self.sigma
            total += np.exp(-0.5 * z * z)
        return (total / (self.sigma * np.sqrt(TWO_PI)))[()]


@dataclass(frozen=True)
class ExactHeterodyne(NoiseModel):
    """Heterodyne quadrature pair (sqrt(S) cos, sqrt(S) sin) + independent
    centered Gaussians of variance 1/2 per component; theta = argument."""

    S: float

    def __post_init__(self):
        if not self.S > 0:
            raise ValueError("S must be positive")

    @property
    def kappa(self) -> float:
        """Amplitude SNR sqrt(2S) of the quadrature pair."""
        return np.sqrt(2.0 * self.S)

    def sample_pair(self, theta_in, rng):
        theta_in = np.asarray(theta_in, dtype=float)
        a = np.sqrt(self.S)
        i = a * np.cos(theta_in) + rng.normal(0.0, np.sqrt(0.5), theta_in.shape)
        q = a * np.sin(theta_in) + rng.normal(0.0, np.sqrt(0.5), theta_in.shape)
        return i, q

    def sample(self, theta_in, rng):
        i, q = self.sample_pair(theta_in, rng)
        return wrap_angle(np.arctan2(q, i))

    def density_diff(self, delta):
        # marginal phase density of a noncentral bivariate Gaussian
        delta = np.asarray(circular_diff(delta, 0.0), dtype=float)
        kappa = self.kappa
        c = kappa * np.cos(delta)
        s2 = (kappa * np.sin(delta)) ** 2
        base = np.exp(-0.5 * kappa * kappa) / TWO_PI
        body = c / np.sqrt(TWO_PI) * np.exp(-0.5 * s2) * ndtr(c)
        return (base + body)[()]


@dataclass(frozen=True)
class Observation:
    """Eve's (or Bob's) measured phase, with the raw quadrature pair kept
    when the heterodyne model produced it."""

    theta: np.ndarray
    raw: tuple | None = None


def sample_observation(theta_in, model, rng) -> Observation:
    """Push phases through the measurement channel.  model=None means the
    noiseless channel."""
    theta_in = wrap_angle(np.asarray(theta_in, dtype=float))
    if model is None:
        return Observation(theta=theta_in)
    if isinstance(model, ExactHeterodyne):
        i, q = model.sample_pair(theta_in, rng)
        return Observation(theta=wrap_angle(np.arctan2(q, i)), raw=(i, q))
    return Observation(theta=model.sample(theta_in, rng))


def observation_density(theta, theta_in, model):
    """Channel density p(theta | theta_in); depends only on the circular
    difference of its angle arguments."""
    if model is None:
        raise ValueError("the noiseless channel has no density (delta kernel)")
    return model.density_diff(circular_diff(theta, theta_in))


def make_noise_model(kind: str, spec_S: float, sigma: float | None = None):
    """Build a model from its config name; sigma overrides 1/sqrt(S) for
    the wedge and Gaussian variants."""
    kind = kind.lower()
    if kind == "none":
        return None
    if kind == "wedge":
        return Wedge(sigma if sigma is not None else wedge_sigma(spec_S))
    if kind == "gaussian":
        return GaussianPhase(sigma if sigma is not None else wedge_sigma(spec_S))
    if kind == "heterodyne":
        if sigma is not None:
            raise ValueError("the heterodyne model takes no sigma override")
        return ExactHeterodyne(spec_S)
    raise ValueError(f"unknown channel kind {kind!r}")
