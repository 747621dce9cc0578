"""Running-key sources: LFSRs, the parallel counter-mode bank, the keyed
mapper, and the keyed-connection-polynomial machinery.

Polynomial mask convention: a connection polynomial
x^d + c_{d-1} x^{d-1} + ... + c_1 x + 1 of degree d is stored as a mask of
length d whose bit (k-1) is the coefficient of x^k (so bit d-1, the x^d
term, is always set; the constant term is implicit).  The register is
stepped in the Fibonacci convention, output taken from the low end; the
feedback bit is the parity of the state ANDed with the bit-reversed mask,
which realizes the standard recurrence for the stored polynomial.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes


# ---------------------------------------------------------------------------
# GF(2) polynomial helpers

def popcount(x: int) -> int:
    return bin(x).count("1")


def reverse_bits(x: int, width: int) -> int:
    r = 0
    for i in range(width):
        if x >> i & 1:
            r |= 1 << (width - 1 - i)
    return r


def mask_from_exponents(exponents) -> int:
    """Mask for the polynomial with the given nonzero exponents (the
    constant term may be listed but is implicit)."""
    m = 0
    for k in exponents:
        if k >= 1:
            m |= 1 << (k - 1)
    return m


def mask_exponents(mask: int):
    """Nonzero exponents of the polynomial encoded by mask (plus the
    implicit constant term 0)."""
    return [0] + [i + 1 for i in range(mask.bit_length()) if mask >> i & 1]


def poly_mul_mod(a: int, b: int, full_poly: int, degree: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> degree & 1:
            a ^= full_poly
    return r


def poly_pow_mod(base: int, e: int, full_poly: int, degree: int) -> int:
    r = 1
    while e:
        if e & 1:
            r = poly_mul_mod(r, base, full_poly, degree)
        e >>= 1
        base = poly_mul_mod(base, base, full_poly, degree)
    return r


def full_polynomial(mask: int) -> int:
    """Integer with bit k = coefficient of x^k, including the constant."""
    return (mask << 1) | 1


def is_primitive(mask: int, degree: int, order_factors) -> bool:
    """Primitivity test for the polynomial encoded by mask.

    order_factors must be the prime factors of 2**degree - 1.
    """
    if mask.bit_length() != degree:
        return False
    f = full_polynomial(mask)
    order = (1 << degree) - 1
    if poly_pow_mod(0b10, order, f, degree) != 1:
        return False
    for q in order_factors:
        if poly_pow_mod(0b10, order // q, f, degree) == 1:
            return False
    return True


# ---------------------------------------------------------------------------
# LFSR

class DegenerateStateError(ValueError):
    """The all-zero LFSR state, which is a fixed point of the recurrence."""


@dataclass(frozen=True)
class LfsrSpec:
    """A Fibonacci LFSR: connection polynomial mask plus seed state."""

    degree: int
    feedback: int
    seed: int
    taps: int = field(init=False)

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be at least 2")
        if self.feedback == 0 or self.feedback.bit_length() > self.degree:
            raise ValueError("feedback mask must be nonzero and fit the degree")
        if not 0 < self.seed < (1 << self.degree):
            raise ValueError("seed must be a nonzero state of `degree` bits")
        object.__setattr__(self, "taps", popcount(self.feedback))

    @property
    def step_mask(self) -> int:
        return reverse_bits(self.feedback, self.degree)


def lfsr_step(state: int, feedback: int, degree: int):
    """One register step.  Returns (output bit, new state)."""
    if state == 0:
        raise DegenerateStateError("all-zero LFSR state")
    out = state & 1
    fb = popcount(state & reverse_bits(feedback, degree)) & 1
    return out, (state >> 1) | (fb << (degree - 1))


def lfsr_period(feedback: int, degree: int, seed: int = 1) -> int:
    """Exhaustive cycle length of the state sequence starting from seed."""
    state = seed
    step_mask = reverse_bits(feedback, degree)
    n = 0
    while True:
        fb = popcount(state & step_mask) & 1
        state = (state >> 1) | (fb << (degree - 1))
        n += 1
        if state == seed:
            return n


def lfsr_output_masks(feedback: int, degree: int, count: int):
    """Masks A_t with output bit t = parity(A_t & seed), for t < count.

    The output sequence is linear in the seed; these masks are the rows of
    that linear map and drive both fast multi-state scoring and state
    recovery from scattered output positions.
    """
    taps = [i for i in range(degree) if reverse_bits(feedback, degree) >> i & 1]
    masks = [1 << t for t in range(min(degree, count))]
    for t in range(degree, count):
        a = 0
        for i in taps:
            a ^= masks[t - degree + i]
        masks.append(a)
    return masks


def solve_seed_from_bits(positions, values, feedback: int, degree: int):
    """Recover the seed from output bits at the given positions by GF(2)
    elimination.  Returns None if the positions do not determine the state.
    """
    top = max(positions) + 1
    masks = lfsr_output_masks(feedback, degree, top)
    rows = [(masks[p], v & 1) for p, v in zip(positions, values)]
    pivots = {}  # pivot bit -> (row, value)
    for row, val in rows:
        for pb in sorted(pivots, reverse=True):
            if row >> pb & 1:
                prow, pval = pivots[pb]
                row ^= prow
                val ^= pval
        if row:
            pivots[row.bit_length() - 1] = (row, val)
        if len(pivots) == degree:
            break
    if len(pivots) < degree:
        return None
    seed = 0
    for pb in sorted(pivots):  # ascending: lower bits resolve first
        row, val = pivots[pb]
        acc = val
        for j in range(pb):
            if row >> j & 1:
                acc ^= seed >> j & 1
        if acc:
            seed |= 1 << pb
    return seed


# ---------------------------------------------------------------------------
# Generators

class KeystreamGenerator:
    """Deterministic bit source: same seed and call sequence, same output."""

    descriptor = "abstract"

    def next_bit(self) -> int:
        raise NotImplementedError

    def next_segment(self, m: int) -> int:
        """Consume m bits, packed most-significant-first."""
        v = 0
        for _ in range(m):
            v = (v << 1) | self.next_bit()
        return v

    def next_bits(self, n: int):
        return [self.next_bit() for _ in range(n)]

    def reset(self) -> None:
        raise NotImplementedError


class Lfsr(KeystreamGenerator):
    def __init__(self, spec: LfsrSpec):
        self.spec = spec
        self.descriptor = (
            f"lfsr(degree={spec.degree}, feedback=0x{spec.feedback:x})"
        )
        self._step_mask = spec.step_mask
        self.state = spec.seed

    def next_bit(self) -> int:
        s = self.state
        out = s & 1
        fb = popcount(s & self._step_mask) & 1
        self.state = (s >> 1) | (fb << (self.spec.degree - 1))
        return out

    def next_bits(self, n: int):
        # local-variable loop; this is the hot path for long keystreams
        s = self.state
        mask = self._step_mask
        hi = self.spec.degree - 1
        out = []
        append = out.append
        for _ in range(n):
            append(s & 1)
            fb = bin(s & mask).count("1") & 1
            s = (s >> 1) | (fb << hi)
        self.state = s
        return out

    def reset(self) -> None:
        self.state = self.spec.seed


class CounterModeLane(KeystreamGenerator):
    """One keyed deterministic bit lane: AES-256 in counter mode over a
    zero stream, bits taken most-significant-first within each byte."""

    BLOCK = 16

    def __init__(self, key: bytes):
        if len(key) != 32:
            raise ValueError("lane key must be 32 bytes (AES-256)")
        self.key = key
        self.descriptor = "aes256-ctr-lane"
        self.reset()

    def reset(self) -> None:
        enc = Cipher(
            algorithms.AES(self.key), modes.CTR(b"\x00" * 16)
        ).encryptor()
        self._enc = enc
        self._buf = b""
        self._bitpos = 0

    def _byte(self, idx: int) -> int:
        while len(self._buf) <= idx:
            self._buf += self._enc.update(b"\x00" * 4096)
        return self._buf[idx]

    def bit_at(self, i: int) -> int:
        byte = self._byte(i // 8)
        return byte >> (7 - i % 8) & 1

    def next_bit(self) -> int:
        b = self.bit_at(self._bitpos)
        self._bitpos += 1
        return b


@dataclass(frozen=True)
class ParallelBankSpec:
    """m independent keyed lanes; lane i supplies bit i (MSB first) of each
    running-key segment."""

    m: int
    subkeys: tuple

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("bank width must be >= 1")
        if len(self.subkeys) != self.m:
            raise ValueError("need exactly m subkeys")
        if len(set(self.subkeys)) != self.m:
            raise ValueError("subkeys must be pairwise distinct")


class ParallelBank(KeystreamGenerator):
    """Bank of m parallel counter-mode generators; segment bits are drawn
    one per lane at a common counter, so lanes never share state."""

    def __init__(self, spec: ParallelBankSpec, lane_factory=CounterModeLane):
        self.spec = spec
        self.lanes = [lane_factory(k) for k in spec.subkeys]
        self.descriptor = f"parallel_bank(m={spec.m})"
        self.counter = 0

    def segment_at(self, counter: int) -> int:
        v = 0
        for lane in self.lanes:
            v = (v << 1) | lane.bit_at(counter)
        return v

    def next_segment(self, m: int) -> int:
        if m != self.spec.m:
            raise ValueError(
                f"bank width {self.spec.m} does not match requested m={m}"
            )
        v = self.segment_at(self.counter)
        self.counter += 1
        return v

    def next_bit(self) -> int:
        raise NotImplementedError(
            "the bank emits whole segments, one bit per lane"
        )

    def reset(self) -> None:
        for lane in self.lanes:
            lane.reset()
        self.counter = 0


def running_key_segment(gen: KeystreamGenerator, m: int) -> int:
    """Next m-bit basis index from the generator, most-significant-first."""
    return gen.next_segment(m)


def parallel_bank_segment(bank: ParallelBank, counter: int) -> int:
    """Segment at an explicit counter value (bit i from lane i)."""
    return bank.segment_at(counter)


# ---------------------------------------------------------------------------
# Keyed mapper

@dataclass(frozen=True)
class KeyedMapperSpec:
    """Auxiliary cipher whose running key re-keys the basis mapper each
    qumode (a per-qumode modular shift of the basis alphabet)."""

    aux_seed: bytes

    def make_generator(self) -> KeystreamGenerator:
        key = self.aux_seed.ljust(32, b"\x00")[:32]
        return CounterModeLane(key)


def keyed_mapper_apply(k: int, aux_segment: int, M: int) -> int:
    """Basis index after the keyed mapper: (k' + aux) mod M."""
    if not (0 <= k < M and 0 <= aux_segment < M):
        raise ValueError("mapper inputs must lie in [0, M)")
    return (k + aux_segment) % M


# ---------------------------------------------------------------------------
# Polynomial table

class PolynomialTable:
    """Curated primitive connection polynomials, keyed-polynomial source.

    File format: one entry per line, `degree hex_mask`; blank lines and
    `#` comments ignored.
    """

    def __init__(self, entries):
        self._by_degree = {}
        for degree, mask in entries:
            self._by_degree.setdefault(degree, []).append(mask)

    @classmethod
    def parse(cls, text: str) -> "PolynomialTable":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected `degree hex_mask`")
            degree = int(parts[0])
            mask = int(parts[1], 16)
            if mask.bit_length() != degree:
                raise ValueError(
                    f"line {lineno}: mask 0x{mask:x} does not have degree {degree}"
                )
            entries.append((degree, mask))
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "PolynomialTable":
        with open(path) as fh:
            return cls.parse(fh.read())

    @classmethod
    def builtin(cls) -> "PolynomialTable":
        text = (
            importlib.resources.files("y00lab.data")
            .joinpath("polynomials.txt")
            .read_text()
        )
        return cls.parse(text)

    def degrees(self):
        return sorted(self._by_degree)

    def masks(self, degree: int):
        return list(self._by_degree.get(degree, []))

    def __len__(self):
        return sum(len(v) for v in self._by_degree.values())


def sample_connection_polynomial(key: int, degree: int, table: PolynomialTable) -> int:
    """Key-selected connection polynomial: the key reduced modulo the
    number of table entries for the degree."""
    masks = table.masks(degree)
    if not masks:
        raise ValueError(f"polynomial table has no entries for degree {degree}")
    return masks[key % len(masks)]
