"""Eve's side: soft information about the running key, and the seed-key
attacks framed as decoding in noise.

The observed phase of each qumode induces a posterior over the basis
index k' (ciphertext-only) or over the conditional signal point
(known-plaintext).  Those posteriors feed three attacks:

* exhaustive_likelihood_attack -- score every nonzero LFSR state by the
  log posterior of the running key it implies (assisted brute force);
* fca_bit_flip -- iterative message-passing correlation decoding against
  the LFSR's parity checks and their low-weight multiples;
* attack_parallel_bank -- the same correlation statistic aimed at each
  bit lane of the counter-mode bank, reported against a random baseline
  (no linear structure exists to decode).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .channel import sample_observation
from .constellation import ConstellationSpec, circular_diff
from .dsr import DsrPolicy, diff_density_function
from .keystream import (
    LfsrSpec,
    ParallelBankSpec,
    full_polynomial,
    lfsr_output_masks,
    poly_mul_mod,
)

PROB_FLOOR = 1e-30


# ---------------------------------------------------------------------------
# Scenarios and soft information

@dataclass(frozen=True)
class AttackScenario:
    kind: str  # "cta" or "kpa"
    plaintext: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("cta", "kpa"):
            raise ValueError("scenario kind must be 'cta' or 'kpa'")
        if self.kind == "kpa" and self.plaintext is None:
            raise ValueError("KPA needs the known plaintext")


@dataclass
class SoftInfo:
    """Per-qumode posterior over k' and per-bit LLRs in keystream order.

    llrs[i, j] is the log-likelihood ratio log P(bit=0)/P(bit=1) of the
    j-th (most-significant-first) running-key bit of qumode i, i.e. of
    keystream bit i*m + j.  The full posterior matrix is kept only when
    N*M fits the configured cell budget.
    """

    M: int
    m: int
    llrs: np.ndarray
    posteriors: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.llrs.shape[0]

    def stream_llrs(self) -> np.ndarray:
        return self.llrs.reshape(-1)


def eve_observe(phases, model, rng):
    """Eve's independent per-qumode measurement on her full copy."""
    return sample_observation(phases, model, rng)


def running_key_posteriors(
    observations,
    scenario: AttackScenario,
    spec: ConstellationSpec,
    model,
    policy: DsrPolicy,
    max_posterior_cells: int = 1 << 24,
    chunk: int = 4096,
) -> SoftInfo:
    """Bayes inversion of the output densities with a uniform prior on k'.

    CTA uses the data-marginal density; KPA conditions on the known bit.
    """
    theta = np.atleast_1d(np.asarray(observations.theta, dtype=float))
    n = theta.size
    M, m = spec.M, spec.m
    if scenario.kind == "kpa":
        x = np.asarray(scenario.plaintext, dtype=np.int64)
        if x.size != n:
            raise ValueError("plaintext length must equal observation length")

    dens = diff_density_function(policy, model)
    point_phases = spec.spacing * np.arange(2 * M)
    ks = np.arange(M)
    idx0 = ks + M * (0 ^ (ks & 1))  # point of (x=0, k')
    idx1 = ks + M * (1 ^ (ks & 1))
    bit_masks = np.array([(ks >> (m - 1 - j)) & 1 for j in range(m)])  # (m, M)

    keep = n * M <= max_posterior_cells
    posteriors = np.empty((n, M)) if keep else None
    llrs = np.empty((n, m))

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        delta = circular_diff(theta[lo:hi, None], point_phases[None, :])
        g = np.asarray(dens(delta))
        if scenario.kind == "cta":
            post = 0.5 * (g[:, idx0] + g[:, idx1])
        else:
            xb = x[lo:hi]
            pts = ks[None, :] + M * (xb[:, None] ^ (ks[None, :] & 1))
            post = np.take_along_axis(g, pts, axis=1)
        norm = post.sum(axis=1, keepdims=True)
        degenerate = norm[:, 0] <= 0
        if np.any(degenerate):
            post[degenerate] = 1.0
            norm = post.sum(axis=1, keepdims=True)
        post = post / norm
        if keep:
            posteriors[lo:hi] = post
        p = np.clip(post, PROB_FLOOR, None)
        for j in range(m):
            p1 = p[:, bit_masks[j] == 1].sum(axis=1)
            p0 = p[:, bit_masks[j] == 0].sum(axis=1)
            llrs[lo:hi, j] = np.log(np.clip(p0, PROB_FLOOR, None)) - np.log(
                np.clip(p1, PROB_FLOOR, None)
            )
    return SoftInfo(M=M, m=m, llrs=llrs, posteriors=posteriors)


# ---------------------------------------------------------------------------
# Attack parameters and results

@dataclass
class AttackParams:
    N: int
    N1: Optional[int] = None
    max_candidates: int = 10
    fca_rounds: int = 30
    check_weight: int = 3
    max_check_degree: Optional[int] = None
    max_states: int = 1 << 26
    damping: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.N1 is not None and self.N1 > self.N:
            raise ValueError("N1 must not exceed N")


@dataclass
class AttackResult:
    candidates: list  # [(seed, score)] sorted by descending score
    states_examined: int = 0
    checks_evaluated: int = 0
    wallclock: float = 0.0
    converged: bool = True
    params: Optional[AttackParams] = None
    note: str = ""

    def rank_of(self, true_seed: int) -> Optional[int]:
        for r, (s, _) in enumerate(self.candidates, start=1):
            if s == true_seed:
                return r
        return None

    def success(self, true_seed: int) -> bool:
        return bool(self.candidates) and self.candidates[0][0] == true_seed


class WorkCapExceeded(RuntimeError):
    """The attack would exceed its configured resource cap."""


# ---------------------------------------------------------------------------
# Exhaustive (assisted brute-force) attack

def exhaustive_likelihood_attack(
    soft: SoftInfo, lfsr: LfsrSpec, params: AttackParams
) -> AttackResult:
    """Score every nonzero initial state by the summed log posterior of
    the running-key segments it implies over the first N qumodes."""
    t0 = time.perf_counter()
    d = lfsr.degree
    n_states = (1 << d) - 1
    if n_states > params.max_states:
        raise WorkCapExceeded(
            f"degree {d} needs {n_states} states, cap is {params.max_states}"
        )
    if soft.posteriors is None:
        raise ValueError("exhaustive attack needs the full posterior matrix")
    n = min(params.N, soft.n)
    m = soft.m
    logpost = np.log(np.clip(soft.posteriors[:n], PROB_FLOOR, None))
    masks = np.array(lfsr_output_masks(lfsr.feedback, d, n * m), dtype=np.uint64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.uint64)

    best: list = []
    chunk = 1 << 16
    for lo in range(1, n_states + 1, chunk):
        hi = min(lo + chunk, n_states + 1)
        states = np.arange(lo, hi, dtype=np.uint64)
        scores = np.zeros(states.size)
        for q in range(n):
            a = masks[q * m:(q + 1) * m]
            bits = np.bitwise_count(a[:, None] & states[None, :]).astype(np.uint64) & np.uint64(1)
            kq = (bits << shifts[:, None]).sum(axis=0).astype(np.int64)
            scores += logpost[q, kq]
        take = min(params.max_candidates, states.size)
        part = np.argpartition(-scores, take - 1)[:take]
        best.extend((int(states[i]), float(scores[i])) for i in part)
        best.sort(key=lambda c: (-c[1], c[0]))
        best = best[: params.max_candidates]
    return AttackResult(
        candidates=best,
        states_examined=n_states,
        wallclock=time.perf_counter() - t0,
        params=params,
    )


# ---------------------------------------------------------------------------
# Parity checks

def parity_check_families(
    feedback: int,
    degree: int,
    stream_len: int,
    check_weight: int = 3,
    max_check_degree: Optional[int] = None,
    max_families: int = 24,
    max_pairs: int = 200_000,
):
    """Exponent sets of low-weight polynomial multiples annihilating the
    output stream: the recurrence itself, its squarings, and (for
    check_weight >= the base weight) a bounded birthday search for further
    weight-3/4 multiples under the degree bound.

    Returns (families, work) where each family is a sorted offset tuple.
    """
    if max_check_degree is None:
        max_check_degree = stream_len - 1
    max_check_degree = min(max_check_degree, stream_len - 1)
    step_bits = []
    from .keystream import reverse_bits

    sm = reverse_bits(feedback, degree)
    for i in range(degree):
        if sm >> i & 1:
            step_bits.append(i)
    base = tuple(sorted(step_bits + [degree]))
    families = []
    seen = set()

    def add(offsets):
        offs = tuple(sorted(o - min(offsets) for o in offsets))
        if offs not in seen and max(offs) <= max_check_degree:
            seen.add(offs)
            families.append(offs)

    # squarings: g(x)^(2^e) = g(x^(2^e)) keeps the weight
    e = 0
    while max(base) << e <= max_check_degree and len(families) < max_families:
        add(tuple(o << e for o in base))
        e += 1

    work = 0
    if check_weight >= 3 and len(families) < max_families:
        # the stream obeys the reciprocal polynomial's recurrence, so
        # annihilating multiples must be reduced modulo the reciprocal
        from .keystream import reverse_bits as _rev

        f = _rev(full_polynomial(feedback), degree + 1)
        residues = {}
        r = 1  # x^0 mod f
        table_limit = min(max_check_degree, max_pairs)
        rs = [0] * (table_limit + 1)
        for i in range(table_limit + 1):
            rs[i] = r
            residues.setdefault(r, i)
            r = poly_mul_mod(r, 0b10, f, degree)
            work += 1
        # weight-3 multiples x^a + x^b + 1
        for b in range(1, table_limit + 1):
            a = residues.get(rs[b] ^ 1)
            if a is not None and a not in (0, b):
                add((0, min(a, b), max(a, b)))
                if len(families) >= max_families:
                    break
        # weight-4 multiples x^a + x^b + x^c + 1 (bounded pair scan)
        if check_weight >= 4 and len(families) < max_families:
            rng = np.random.default_rng(12345)
            for _ in range(max_pairs):
                b, c = rng.integers(1, table_limit + 1, size=2)
                if b == c:
                    continue
                work += 1
                a = residues.get(rs[b] ^ rs[c] ^ 1)
                if a is not None and len({0, a, b, c}) == 4:
                    add(tuple(sorted((0, a, b, c))))
                    if len(families) >= max_families:
                        break
    return families, work


# ---------------------------------------------------------------------------
# Iterative bit-flipping / message-passing FCA

def _extract_candidates(llr_total, feedback, degree, max_windows=3):
    """Candidate seeds from the decoded stream: a GF(2) solve on the
    highest-confidence positions plus hard-decision windows."""
    from .keystream import solve_seed_from_bits

    T = llr_total.size
    hard = (llr_total < 0).astype(np.int64)
    conf_order = np.argsort(-np.abs(llr_total), kind="stable")
    # greedy independent subset among the most confident positions
    cap = min(T, 20 * degree)
    positions = conf_order[:cap].tolist()
    seeds = []
    solved = solve_seed_from_bits(
        positions, [int(hard[p]) for p in positions], feedback, degree
    )
    if solved:
        seeds.append(solved)
    # fallback: pack the first `degree` decoded bits at a few offsets
    for w in range(max_windows):
        start = w * degree
        if start + degree > T:
            break
        s = 0
        for i in range(degree):
            if hard[start + i]:
                s |= 1 << i
        if s and start == 0:
            seeds.append(s)
        elif s:
            back = solve_seed_from_bits(
                list(range(start, start + degree)),
                hard[start:start + degree].tolist(),
                feedback, degree,
            )
            if back:
                seeds.append(back)
    out = []
    for s in seeds:
        if s not in out:
            out.append(s)
    return out


def _candidate_stream_bits(seed, feedback, degree, T):
    masks = lfsr_output_masks(feedback, degree, T)
    if degree <= 63:
        a = np.array(masks, dtype=np.uint64)
        return (np.bitwise_count(a & np.uint64(seed)) & 1).astype(np.int64)
    return np.array([bin(a & seed).count("1") & 1 for a in masks], dtype=np.int64)


def fca_bit_flip(soft: SoftInfo, lfsr: LfsrSpec, params: AttackParams) -> AttackResult:
    """Meier-Staffelbach-style iterative decoding of the keystream.

    Per round, every parity check sends each of its bits an extrinsic
    log-likelihood (tanh-product of the other bits' current soft values);
    hard decisions follow the accumulated totals.  The state is then
    solved from the most confident positions and verified by rescoring.
    """
    t0 = time.perf_counter()
    n = min(params.N, soft.n)
    L_prior = soft.llrs[:n].reshape(-1).astype(float)
    T = L_prior.size
    families, search_work = parity_check_families(
        lfsr.feedback, lfsr.degree, T,
        check_weight=params.check_weight,
        max_check_degree=params.max_check_degree,
    )
    if not families:
        raise ValueError(
            "no parity checks found under the configured degree/weight bounds"
        )

    L = L_prior.copy()
    checks_evaluated = search_work
    converged = False
    clip = 1.0 - 1e-12
    for _ in range(params.fca_rounds):
        v = np.tanh(np.clip(L, -30, 30) / 2.0)
        L_new = L_prior.copy()
        for offsets in families:
            span = offsets[-1]
            nt = T - span
            if nt <= 0:
                continue
            sliced = [v[o:o + nt] for o in offsets]
            checks_evaluated += nt
            for ri, r in enumerate(offsets):
                prod = None
                for oi, arr in enumerate(sliced):
                    if oi == ri:
                        continue
                    prod = arr.copy() if prod is None else prod * arr
                ext = 2.0 * np.arctanh(np.clip(prod, -clip, clip))
                L_new[r:r + nt] += params.damping * ext
        L = L_new
        hard = (L < 0).astype(np.int64)
        base = families[0]
        nt = T - base[-1]
        fails = np.zeros(nt, dtype=np.int64)
        for o in base:
            fails ^= hard[o:o + nt]
        if fails.sum() == 0:
            converged = True
            break

    seeds = _extract_candidates(L, lfsr.feedback, lfsr.degree)
    sgn = np.where(L_prior >= 0, 1.0, -1.0) * np.abs(L_prior)
    scored = []
    for s in seeds:
        bits = _candidate_stream_bits(s, lfsr.feedback, lfsr.degree, T)
        score = float(np.sum(np.where(bits == 0, sgn, -sgn)))
        scored.append((s, score))
    scored.sort(key=lambda c: (-c[1], c[0]))
    return AttackResult(
        candidates=scored[: params.max_candidates],
        checks_evaluated=int(checks_evaluated),
        wallclock=time.perf_counter() - t0,
        converged=converged,
        params=params,
        note=f"{len(families)} check families",
    )


# ---------------------------------------------------------------------------
# Parallel bank probe

@dataclass
class LaneStatistics:
    lane: int
    window_fractions: np.ndarray
    baseline_fractions: np.ndarray
    ks_statistic: float
    ks_pvalue: float


@dataclass
class ParallelBankResult:
    lanes: list  # LaneStatistics per lane
    checks_evaluated: int = 0
    wallclock: float = 0.0
    note: str = ""


def _check_fractions(bits: np.ndarray, offsets, n1: int) -> np.ndarray:
    """Per-window fraction of satisfied parity checks on a hard bit
    stream."""
    span = offsets[-1]
    out = []
    for lo in range(0, bits.size - span, n1):
        hi = min(lo + n1, bits.size - span)
        if hi - lo < max(n1 // 2, 1):
            break
        acc = np.zeros(hi - lo, dtype=np.int64)
        for o in offsets:
            acc ^= bits[lo + o:hi + o]
        out.append(1.0 - acc.mean())
    return np.array(out)


def attack_parallel_bank(
    soft: SoftInfo,
    bank: ParallelBankSpec,
    params: AttackParams,
    reference_feedback: int = 0x8805,
    reference_degree: int = 16,
) -> ParallelBankResult:
    """Correlation statistics of each bank lane against the parity checks
    of a hypothesized LFSR, versus a seeded random-bit baseline.

    The bank has no linear structure to decode, so no key search is run;
    a lane whose statistic separates from baseline would expose a broken
    lane generator (the LFSR positive control demonstrates the
    sensitivity of the probe).
    """
    t0 = time.perf_counter()
    if soft.n == 0:
        return ParallelBankResult(lanes=[], note="no observations")
    n = min(params.N, soft.n)
    n1 = params.N1 or max(n // 20, 64)
    families, _ = parity_check_families(
        reference_feedback, reference_degree, n, check_weight=3, max_families=1
    )
    offsets = families[0]
    rng = np.random.default_rng(params.seed)
    lanes = []
    work = 0
    for j in range(soft.m):
        hard = (soft.llrs[:n, j] < 0).astype(np.int64)
        frac = _check_fractions(hard, offsets, n1)
        base_bits = rng.integers(0, 2, size=n).astype(np.int64)
        base = _check_fractions(base_bits, offsets, n1)
        work += 2 * n
        if frac.size and base.size:
            ks = stats.ks_2samp(frac, base)
            lanes.append(LaneStatistics(j, frac, base, float(ks.statistic), float(ks.pvalue)))
        else:
            lanes.append(LaneStatistics(j, frac, base, 0.0, 1.0))
    return ParallelBankResult(
        lanes=lanes,
        checks_evaluated=work,
        wallclock=time.perf_counter() - t0,
        note=f"reference degree {reference_degree}",
    )
