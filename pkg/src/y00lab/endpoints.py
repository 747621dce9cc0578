"""Alice's encryptor and Bob's keyed decryptor.

Both ends expand the shared seed key through identical generator
instances; a session keeps the two keystreams in lockstep (m bits per
qumode, plus m auxiliary bits when the keyed mapper is on).  Bob decides
each bit by the half-circle rule: pick the x whose signal point is
circularly nearer to the observed phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel import Observation, sample_observation
from .constellation import ConstellationSpec, circular_diff, gamma, signal_phase
from .dsr import DsrPolicy, randomize_phase
from .keystream import KeyedMapperSpec, KeystreamGenerator, keyed_mapper_apply


class SynchronizationError(RuntimeError):
    """Bob's keystream position does not match the observation stream."""


@dataclass(frozen=True)
class SessionConfig:
    spec: ConstellationSpec
    enc_factory: Callable[[], KeystreamGenerator]
    policy: DsrPolicy
    model: object  # NoiseModel or None
    mapper: Optional[KeyedMapperSpec] = None
    master_seed: int = 0
    enc_kind: str = "lfsr"
    dsr_kind: str = "off"
    channel_kind: str = "wedge"


@dataclass
class FrameResult:
    n: int
    errors: int
    ber: float = field(init=False)

    def __post_init__(self):
        self.ber = self.errors / self.n if self.n else 0.0


class Session:
    """One encrypt/decrypt session; Alice's and Bob's generators are
    constructed identically and advanced in lockstep."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.alice_gen = cfg.enc_factory()
        self.bob_gen = cfg.enc_factory()
        if cfg.mapper is not None:
            self.alice_aux = cfg.mapper.make_generator()
            self.bob_aux = cfg.mapper.make_generator()
        else:
            self.alice_aux = self.bob_aux = None
        self.sent = 0
        self.decoded = 0

    def _next_basis(self, gen, aux):
        m = self.cfg.spec.m
        k = gen.next_segment(m)
        if aux is not None:
            k = keyed_mapper_apply(k, aux.next_segment(m), self.cfg.spec.M)
        return k

    def encode(self, bits, rng) -> np.ndarray:
        """Alice: draw one basis per bit, map to a signal phase, apply the
        randomization policy.  Returns the transmitted phases."""
        bits = np.asarray(bits, dtype=np.int64)
        if bits.size == 0:
            return np.empty(0, dtype=float)
        ks = np.fromiter(
            (self._next_basis(self.alice_gen, self.alice_aux) for _ in bits),
            dtype=np.int64, count=bits.size,
        )
        theta_s = signal_phase(bits, ks, self.cfg.spec)
        self.sent += bits.size
        return randomize_phase(theta_s, self.cfg.policy, rng)

    def decode(self, observations: Observation) -> np.ndarray:
        """Bob: reconstruct each basis from the synchronized keystream and
        apply the half-circle decision rule (ties toward x=0)."""
        theta = np.atleast_1d(np.asarray(observations.theta, dtype=float))
        if self.decoded + theta.size > self.sent:
            raise SynchronizationError(
                f"decoding {theta.size} qumodes at position {self.decoded} "
                f"but only {self.sent} were sent"
            )
        ks = np.fromiter(
            (self._next_basis(self.bob_gen, self.bob_aux) for _ in theta),
            dtype=np.int64, count=theta.size,
        )
        self.decoded += theta.size
        theta0 = signal_phase(np.zeros_like(ks), ks, self.cfg.spec)
        d = np.abs(circular_diff(theta, theta0))
        return (d > np.pi / 2).astype(np.int64)


def alice_encode(bits, cfg: SessionConfig, rng) -> np.ndarray:
    """One-shot encode with a fresh session (spec surface)."""
    return Session(cfg).encode(bits, rng)


def bob_decode(observations: Observation, cfg: SessionConfig) -> np.ndarray:
    """One-shot decode; the session's Bob keystream starts from the seed,
    matching an alice_encode performed from the seed."""
    session = Session(cfg)
    n = np.atleast_1d(observations.theta).size
    session.sent = n  # the phases came from a synchronized encoder
    return session.decode(observations)


def measure_ber(cfg: SessionConfig, n: int, rng) -> FrameResult:
    """Transmit n uniformly random bits through encode -> channel ->
    decode and count mismatches."""
    if n < 1:
        raise ValueError("n must be >= 1")
    session = Session(cfg)
    bits = rng.integers(0, 2, size=n)
    phases = session.encode(bits, rng)
    obs = sample_observation(phases, cfg.model, rng)
    decoded = session.decode(obs)
    errors = int(np.sum(decoded != bits))
    return FrameResult(n=n, errors=errors)


def result_row(cfg: SessionConfig, run_id: str, res: FrameResult) -> dict:
    """CSV row for a BER measurement."""
    return {
        "run_id": run_id,
        "M": cfg.spec.M,
        "S": cfg.spec.S,
        "gamma": gamma(cfg.spec),
        "enc_kind": cfg.enc_kind,
        "dsr_kind": cfg.dsr_kind,
        "n": res.n,
        "errors": res.errors,
        "ber": res.ber,
    }
