import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from y00lab.keystream import (
    CounterModeLane,
    DegenerateStateError,
    KeyedMapperSpec,
    Lfsr,
    LfsrSpec,
    ParallelBank,
    ParallelBankSpec,
    PolynomialTable,
    is_primitive,
    keyed_mapper_apply,
    lfsr_output_masks,
    lfsr_period,
    lfsr_step,
    mask_exponents,
    mask_from_exponents,
    parallel_bank_segment,
    popcount,
    reverse_bits,
    running_key_segment,
    sample_connection_polynomial,
    solve_seed_from_bits,
)

# x^4 + x + 1 (mask bit i = coefficient of x^(i+1))
FB4 = 0x9
# x^2 + x + 1
FB2 = 0x3
# x^31 + x^3 + 1
FB31 = 0x40000004


class TestBitUtils:
    def test_popcount(self):
        assert popcount(0) == 0
        assert popcount(0b1011) == 3

    def test_reverse_bits(self):
        assert reverse_bits(0b0011, 4) == 0b1100
        assert reverse_bits(0x9, 4) == 0x9  # palindrome

    @given(st.integers(min_value=1, max_value=24), st.data())
    def test_reverse_involution(self, width, data):
        x = data.draw(st.integers(min_value=0, max_value=(1 << width) - 1))
        assert reverse_bits(reverse_bits(x, width), width) == x

    def test_mask_exponent_roundtrip(self):
        assert mask_from_exponents([1, 4]) == FB4
        # exponents include the implicit constant term
        assert mask_exponents(FB4) == [0, 1, 4]
        assert mask_from_exponents(mask_exponents(FB31)) == FB31


class TestLfsrStep:
    def test_degree4_period_is_exactly_15(self):
        state = 0xF
        seen = set()
        for i in range(15):
            seen.add(state)
            _, state = lfsr_step(state, FB4, 4)
            if state == 0xF and i < 14:
                pytest.fail("returned to the seed early")
        assert state == 0xF
        assert len(seen) == 15  # every nonzero state visited

    def test_degree2_output_period_3(self):
        state = 0b01
        out = []
        for _ in range(6):
            bit, state = lfsr_step(state, FB2, 2)
            out.append(bit)
        assert out[:3] == out[3:]
        assert len(set(tuple(out[i:i + 3]) for i in (0,))) == 1

    def test_any_nonzero_seed_period_divides_15(self):
        for seed in range(1, 16):
            assert 15 % lfsr_period(FB4, 4, seed) == 0

    def test_all_zero_state_rejected(self):
        with pytest.raises(DegenerateStateError):
            lfsr_step(0, FB4, 4)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            LfsrSpec(degree=4, feedback=0, seed=1)
        with pytest.raises(ValueError):
            LfsrSpec(degree=4, feedback=FB4, seed=0)


class TestPeriods:
    def test_known_periods(self):
        assert lfsr_period(FB4, 4) == 15
        assert lfsr_period(FB2, 2) == 3

    def test_non_primitive_polynomial(self):
        # x^4 + x^3 + x^2 + x + 1 divides x^5 + 1: period 5, not 15
        assert lfsr_period(0xF, 4) == 5

    def test_is_primitive(self):
        assert is_primitive(FB4, 4, [3, 5])
        assert not is_primitive(0xF, 4, [3, 5])


class TestRunningKeySegment:
    def test_packing_msb_first(self):
        from y00lab.keystream import KeystreamGenerator

        class Alternating(KeystreamGenerator):
            def __init__(self):
                self.i = 0

            def next_bit(self):
                self.i += 1
                return self.i & 1  # 1, 0, 1, 0, ...

        assert running_key_segment(Alternating(), 2) == 0b10

    def test_m1_equals_next_bit(self):
        lfsr = Lfsr(LfsrSpec(4, FB4, 0xF))
        ref = Lfsr(LfsrSpec(4, FB4, 0xF))
        assert running_key_segment(lfsr, 1) == ref.next_bit()

    def test_segments_match_manual_stepping(self):
        state = 0xF
        bits = []
        for _ in range(4):
            bit, state = lfsr_step(state, FB4, 4)
            bits.append(bit)
        lfsr = Lfsr(LfsrSpec(4, FB4, 0xF))
        first = running_key_segment(lfsr, 2)
        second = running_key_segment(lfsr, 2)
        assert first == (bits[0] << 1) | bits[1]
        assert second == (bits[2] << 1) | bits[3]


class TestLfsrGenerator:
    def test_next_bits_matches_next_bit(self):
        a = Lfsr(LfsrSpec(16, 0x8805, 0xACE1))
        b = Lfsr(LfsrSpec(16, 0x8805, 0xACE1))
        assert a.next_bits(200) == [b.next_bit() for _ in range(200)]

    def test_reset_replays_identically(self):
        g = Lfsr(LfsrSpec(16, 0x8805, 0xACE1))
        first = g.next_bits(64)
        g.reset()
        assert g.next_bits(64) == first

    def test_output_linearity_masks(self):
        spec = LfsrSpec(12, 0x829, 0x5A5)
        masks = lfsr_output_masks(spec.feedback, spec.degree, 100)
        bits = Lfsr(spec).next_bits(100)
        assert bits == [popcount(a & spec.seed) & 1 for a in masks]

    def test_linear_recovery_from_consecutive_bits(self):
        # `degree` consecutive noiseless output bits determine the seed
        spec = LfsrSpec(16, 0x8805, 0xBEEF)
        bits = Lfsr(spec).next_bits(16)
        assert solve_seed_from_bits(range(16), bits, 0x8805, 16) == 0xBEEF

    def test_linear_recovery_from_scattered_bits(self):
        spec = LfsrSpec(12, 0x829, 0x5A5)
        stream = Lfsr(spec).next_bits(400)
        rng = np.random.default_rng(7)
        pos = sorted(rng.choice(400, size=40, replace=False).tolist())
        got = solve_seed_from_bits(pos, [stream[p] for p in pos], 0x829, 12)
        assert got == 0x5A5


class TestCounterModeLane:
    KEY = bytes(range(32))

    def test_frozen_regression_vector(self):
        lane = CounterModeLane(self.KEY)
        assert [lane.bit_at(i) for i in range(16)] == [
            1, 1, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0,
        ]

    def test_segment_matches_bit_at(self):
        lane = CounterModeLane(self.KEY)
        assert lane.next_segment(10) == 970

    def test_reset(self):
        lane = CounterModeLane(self.KEY)
        first = [lane.next_bit() for _ in range(100)]
        lane.reset()
        assert [lane.next_bit() for _ in range(100)] == first


class TestParallelBank:
    SUBKEYS = tuple(bytes([i]) * 32 for i in range(10))

    def test_duplicate_subkeys_rejected(self):
        with pytest.raises(ValueError):
            ParallelBankSpec(m=2, subkeys=(b"\0" * 32, b"\0" * 32))

    def test_width_one_bank_equals_its_lane(self):
        key = bytes(range(32))
        bank = ParallelBank(ParallelBankSpec(m=1, subkeys=(key,)))
        lane = CounterModeLane(key)
        assert [bank.next_segment(1) for _ in range(64)] == lane.next_bits(64)

    def test_frozen_regression_vectors(self):
        bank = ParallelBank(ParallelBankSpec(m=10, subkeys=self.SUBKEYS))
        assert parallel_bank_segment(bank, 0) == 754
        assert parallel_bank_segment(bank, 5) == 673

    def test_next_segment_advances_the_counter(self):
        bank = ParallelBank(ParallelBankSpec(m=10, subkeys=self.SUBKEYS))
        assert bank.next_segment(10) == 754
        assert bank.next_segment(10) == 898

    def test_bit_composition(self):
        spec = ParallelBankSpec(m=4, subkeys=self.SUBKEYS[:4])
        bank = ParallelBank(spec)
        seg = bank.segment_at(17)
        for i in range(4):
            lane = CounterModeLane(self.SUBKEYS[i])
            assert (seg >> (3 - i)) & 1 == lane.bit_at(17)

    def test_segment_width_must_match(self):
        bank = ParallelBank(ParallelBankSpec(m=4, subkeys=self.SUBKEYS[:4]))
        with pytest.raises(ValueError):
            bank.next_segment(3)


class TestKeyedMapper:
    def test_identity_at_zero(self):
        assert keyed_mapper_apply(3, 0, 4) == 3

    def test_modular_addition(self):
        assert keyed_mapper_apply(3, 2, 4) == 1

    def test_uniformizes_exactly(self):
        # one-time-pad on the index: every aux value hits a distinct output
        M = 16
        for k in range(M):
            assert {keyed_mapper_apply(k, a, M) for a in range(M)} == set(range(M))

    def test_generator_determinism(self):
        spec = KeyedMapperSpec(aux_seed=bytes(32))
        a, b = spec.make_generator(), spec.make_generator()
        assert [a.next_bit() for _ in range(64)] == [b.next_bit() for _ in range(64)]


class TestPolynomialTable:
    def test_builtin_loads_and_has_long_degrees(self):
        table = PolynomialTable.builtin()
        assert 31 in table.degrees()
        assert FB31 in table.masks(31)

    def test_builtin_masks_are_primitive_at_small_degrees(self):
        table = PolynomialTable.builtin()
        for degree in table.degrees():
            if degree > 14:
                continue
            for mask in table.masks(degree):
                assert lfsr_period(mask, degree) == (1 << degree) - 1

    def test_single_entry_table(self):
        table = PolynomialTable.parse("4 0x9\n")
        for key in (0, 1, 12345):
            assert sample_connection_polynomial(key, 4, table) == FB4

    def test_key_zero_selects_first_entry(self):
        table = PolynomialTable.parse("6 0x21\n6 0x33\n6 0x2d\n")
        assert sample_connection_polynomial(0, 6, table) == 0x21

    def test_distinct_keys_mod_size(self):
        table = PolynomialTable.parse("6 0x21\n6 0x33\n6 0x2d\n")
        picks = {sample_connection_polynomial(key, 6, table) for key in (0, 1, 2)}
        assert len(picks) == 3
        assert sample_connection_polynomial(3, 6, table) == \
            sample_connection_polynomial(0, 6, table)

    def test_empty_degree_is_an_error(self):
        table = PolynomialTable.parse("4 0x9\n")
        with pytest.raises(ValueError):
            sample_connection_polynomial(0, 6, table)
