import numpy as np
import pytest

from y00lab.channel import ExactHeterodyne, Observation, Wedge, sample_observation
from y00lab.constellation import ConstellationSpec, circular_diff, signal_phase
from y00lab.dsr import ContinuousHalfCircle, DiscreteWedges, Off
from y00lab.endpoints import (
    FrameResult,
    Session,
    SessionConfig,
    SynchronizationError,
    alice_encode,
    bob_decode,
    measure_ber,
    result_row,
)
from y00lab.keystream import KeyedMapperSpec, KeystreamGenerator, Lfsr, LfsrSpec


class FixedBases(KeystreamGenerator):
    """Generator whose m-bit segments follow a prescribed basis sequence."""

    def __init__(self, bases, m):
        self.bases = list(bases)
        self.m = m
        self.pos = 0
        self.bit = 0

    def next_bit(self):
        k = self.bases[self.pos % len(self.bases)]
        b = (k >> (self.m - 1 - self.bit)) & 1
        self.bit += 1
        if self.bit == self.m:
            self.bit = 0
            self.pos += 1
        return b

    def reset(self):
        self.pos = self.bit = 0


def lfsr_config(spec, policy, model, **kw):
    lf = LfsrSpec(16, 0x8805, 0xACE1)
    return SessionConfig(
        spec=spec, enc_factory=lambda: Lfsr(lf), policy=policy, model=model, **kw
    )


SPEC4 = ConstellationSpec(M=4, S=1.0e4)
SPEC16 = ConstellationSpec(M=16, S=1.0e4)


class TestEncode:
    def test_known_keystream_gives_exact_signal_phases(self, rng):
        bases = [0, 3, 1, 2, 2]
        cfg = SessionConfig(
            spec=SPEC4,
            enc_factory=lambda: FixedBases(bases, SPEC4.m),
            policy=Off(),
            model=None,
        )
        bits = np.array([0, 1, 1, 0, 1])
        phases = alice_encode(bits, cfg, rng)
        expected = signal_phase(bits, np.array(bases), SPEC4)
        assert np.allclose(phases, expected)

    def test_zero_bits_leaves_keystream_untouched(self, rng):
        cfg = lfsr_config(SPEC4, Off(), None)
        session = Session(cfg)
        phases = session.encode(np.empty(0, dtype=int), rng)
        assert phases.size == 0
        assert session.alice_gen.state == 0xACE1

    def test_deterministic_for_fixed_seeds(self):
        cfg = lfsr_config(SPEC16, ContinuousHalfCircle(), None)
        bits = np.arange(200) % 2
        a = alice_encode(bits, cfg, np.random.default_rng(42))
        b = alice_encode(bits, cfg, np.random.default_rng(42))
        assert np.array_equal(a, b)


class TestRoundtrip:
    def test_noiseless_off_exhaustive_small_M(self, rng):
        for M in (2, 4, 8, 16):
            spec = ConstellationSpec(M=M, S=1.0e4)
            for k in range(M):
                for x in (0, 1):
                    cfg = SessionConfig(
                        spec=spec,
                        enc_factory=lambda k=k: FixedBases([k], spec.m),
                        policy=Off(),
                        model=None,
                    )
                    session = Session(cfg)
                    phases = session.encode(np.array([x]), rng)
                    decoded = session.decode(Observation(theta=phases))
                    assert decoded[0] == x

    @pytest.mark.parametrize(
        "policy", [Off(), ContinuousHalfCircle(), DiscreteWedges(32)],
        ids=["off", "continuous", "discrete"],
    )
    def test_noiseless_ber_is_zero(self, policy, rng):
        cfg = lfsr_config(SPEC16, policy, None)
        res = measure_ber(cfg, 5000, rng)
        assert res.errors == 0
        assert res.ber == 0.0

    def test_bright_bpsk_is_error_free(self, rng):
        spec = ConstellationSpec(M=4, S=100.0)
        cfg = lfsr_config(spec, Off(), ExactHeterodyne(100.0))
        res = measure_ber(cfg, 2_000_000, rng)
        assert res.ber <= 1e-6

    def test_keyed_mapper_roundtrips(self, rng):
        mapper = KeyedMapperSpec(aux_seed=bytes(range(32)))
        cfg = lfsr_config(SPEC16, ContinuousHalfCircle(), None, mapper=mapper)
        res = measure_ber(cfg, 2000, rng)
        assert res.errors == 0

    def test_one_shot_helpers_are_synchronized(self, rng):
        cfg = lfsr_config(SPEC16, Off(), None)
        bits = rng.integers(0, 2, 500)
        phases = alice_encode(bits, cfg, rng)
        decoded = bob_decode(Observation(theta=phases), cfg)
        assert np.array_equal(decoded, bits)


class TestDiscreteWedgeErrors:
    def test_errors_only_from_the_boundary_wedge(self):
        # wedge noise + W discrete positions: an error needs the extreme
        # offset +-(pi/2 - pi/(2W)) plus noise past the half-circle edge,
        # so ber has the closed form (1/W) * max(0, sigma - pi/(2W)) / sigma
        rng = np.random.default_rng(99)
        spec = ConstellationSpec(M=64, S=100.0)
        sigma = 1.0 / np.sqrt(spec.S)
        W = 16  # pi/(2 sigma) = 15.7 rounds up: boundary crossings exist
        cfg = lfsr_config(spec, DiscreteWedges(W), Wedge(sigma))
        n = 400_000
        res = measure_ber(cfg, n, rng)
        expected = max(0.0, sigma - np.pi / (2 * W)) / (W * sigma)
        se = np.sqrt(expected * (1 - expected) / n)
        assert abs(res.ber - expected) <= 4 * se
        assert res.errors > 0

    def test_rounded_down_wedge_count_is_error_free(self, rng):
        spec = ConstellationSpec(M=1024, S=1.0e4)
        sigma = 1.0 / np.sqrt(spec.S)
        W = 157  # pi/(2 sigma) = 157.08 rounds down: wedges fit inside
        cfg = lfsr_config(spec, DiscreteWedges(W), Wedge(sigma))
        assert measure_ber(cfg, 100_000, rng).errors == 0


class TestSynchronization:
    def test_decoding_past_the_sent_count_raises(self, rng):
        cfg = lfsr_config(SPEC4, Off(), None)
        session = Session(cfg)
        phases = session.encode(np.zeros(3, dtype=int), rng)
        with pytest.raises(SynchronizationError):
            session.decode(Observation(theta=np.zeros(4)))

    def test_incremental_decode_stays_in_lockstep(self, rng):
        cfg = lfsr_config(SPEC16, Off(), None)
        session = Session(cfg)
        bits = rng.integers(0, 2, 100)
        phases = session.encode(bits, rng)
        out = np.concatenate([
            session.decode(Observation(theta=phases[:40])),
            session.decode(Observation(theta=phases[40:])),
        ])
        assert np.array_equal(out, bits)


class TestResultRow:
    def test_fields(self):
        cfg = lfsr_config(SPEC4, Off(), None, dsr_kind="off", enc_kind="lfsr")
        row = result_row(cfg, "r0", FrameResult(n=100, errors=3))
        assert row["run_id"] == "r0"
        assert row["M"] == 4
        assert row["ber"] == pytest.approx(0.03)

    def test_frame_result_empty(self):
        assert FrameResult(n=0, errors=0).ber == 0.0
