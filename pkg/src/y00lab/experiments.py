"""Batch experiment runners behind the CLI: seeded, sharded, and
deterministic regardless of worker count.

Each runner maps a validated config to a list of CSV rows.  Shard seeds
are spawned from the session master seed before any work is scheduled,
and rows are merged in shard order, so the output bytes depend only on
the config.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, attacks
from .channel import sample_observation
from .config import build_session_config, make_enc_factory
from .constellation import gamma
from .endpoints import FrameResult, Session, SessionConfig, measure_ber, result_row
from .keystream import (
    KeystreamGenerator,
    Lfsr,
    LfsrSpec,
    ParallelBank,
    ParallelBankSpec,
)


class ExperimentError(RuntimeError):
    pass


def _shard_rng(master_seed: int, label: str, index: int):
    digest = hashlib.sha256(f"{master_seed}:{label}:{index}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _run_pool(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# simulate

_SIM_SHARD = 100_000


def _simulate_shard(job):
    raw, index, n = job
    cfg = build_session_config(raw)
    rng = _shard_rng(cfg.master_seed, "simulate", index)
    res = measure_ber(cfg, n, rng)
    return index, res.errors, res.n


def run_simulate(raw: dict, workers: int = 1):
    exp = raw["experiment"]
    n = exp.get("n", 100_000)
    shards = []
    i = 0
    while n > 0:
        take = min(n, _SIM_SHARD)
        shards.append((raw, i, take))
        n -= take
        i += 1
    results = _run_pool(_simulate_shard, shards, workers)
    errors = sum(r[1] for r in results)
    total = sum(r[2] for r in results)
    cfg = build_session_config(raw)
    row = result_row(cfg, "simulate-0", FrameResult(n=total, errors=errors))
    fields = ["run_id", "M", "S", "gamma", "enc_kind", "dsr_kind", "n", "errors", "ber"]
    return fields, [row]


# ---------------------------------------------------------------------------
# attack

CONTROL_LANE_FEEDBACK = 0x8805
CONTROL_LANE_DEGREE = 16


class LfsrLane(KeystreamGenerator):
    """Adapter exposing an LFSR through the bank's per-counter bit
    interface (the positive-control lane)."""

    def __init__(self, spec: LfsrSpec):
        self.spec = spec
        self.descriptor = f"lfsr-lane(degree={spec.degree})"
        self._lfsr = Lfsr(spec)
        self._bits = []

    def bit_at(self, i: int) -> int:
        while len(self._bits) <= i:
            self._bits.extend(self._lfsr.next_bits(1024))
        return self._bits[i]

    def next_bit(self) -> int:
        raise NotImplementedError

    def reset(self) -> None:
        self._lfsr.reset()
        self._bits = []


class ControlledBank(ParallelBank):
    """Parallel bank with lane 0 (the MSB lane) replaced by an LFSR."""

    def __init__(self, spec: ParallelBankSpec, lfsr_spec: LfsrSpec):
        super().__init__(spec)
        self.lanes[0] = LfsrLane(lfsr_spec)
        self.descriptor = f"parallel_bank(m={spec.m}, lane0=lfsr)"


def _attack_trial(job):
    raw, trial = job
    cfg = build_session_config(raw)
    exp = raw["experiment"]
    rng = _shard_rng(cfg.master_seed, "attack", trial)
    kind = exp["attack"]
    N = exp.get("N", 1500)
    params = attacks.AttackParams(
        N=N,
        N1=exp.get("N1"),
        max_candidates=exp.get("max_candidates", 10),
        fca_rounds=exp.get("fca_rounds", 30),
        check_weight=exp.get("check_weight", 3),
        max_check_degree=exp.get("max_check_degree"),
        max_states=exp.get("max_states", 1 << 26),
        seed=trial,
    )
    trials = exp.get("trials", 1)

    enc_conf = dict(raw["session"]["enc"])
    control = exp.get("control", False)

    if kind in ("exhaustive", "fca"):
        if enc_conf.get("kind", "lfsr") not in ("lfsr", "lfsr_keyed_poly"):
            raise ExperimentError(f"{kind} attack requires an LFSR ENC")
        _, lfsr_spec = make_enc_factory(enc_conf, cfg.spec)
        if trials > 1:
            seed = int(rng.integers(1, (1 << min(lfsr_spec.degree, 63)) - 1))
            lfsr_spec = LfsrSpec(lfsr_spec.degree, lfsr_spec.feedback, seed)
        true_seed = lfsr_spec.seed
        session_cfg = SessionConfig(
            spec=cfg.spec, enc_factory=lambda: Lfsr(lfsr_spec),
            policy=cfg.policy, model=cfg.model, mapper=cfg.mapper,
            master_seed=cfg.master_seed, enc_kind=cfg.enc_kind,
            dsr_kind=cfg.dsr_kind, channel_kind=cfg.channel_kind,
        )
    else:
        if enc_conf.get("kind") != "parallel_bank":
            raise ExperimentError("parallel_bank attack requires a bank ENC")
        if control:
            _, bank_spec = make_enc_factory(enc_conf, cfg.spec)
            lane_seed = int(rng.integers(1, (1 << CONTROL_LANE_DEGREE) - 1))
            lane_spec = LfsrSpec(CONTROL_LANE_DEGREE, CONTROL_LANE_FEEDBACK, lane_seed)
            session_cfg = SessionConfig(
                spec=cfg.spec,
                enc_factory=lambda: ControlledBank(bank_spec, lane_spec),
                policy=cfg.policy, model=cfg.model, mapper=cfg.mapper,
                master_seed=cfg.master_seed, enc_kind="parallel_bank",
                dsr_kind=cfg.dsr_kind, channel_kind=cfg.channel_kind,
            )
        else:
            session_cfg = cfg
        true_seed = None

    session = Session(session_cfg)
    bits = rng.integers(0, 2, size=N)
    phases = session.encode(bits, rng)
    obs = attacks.eve_observe(phases, session_cfg.model, rng)
    scenario = attacks.AttackScenario(
        kind=exp.get("scenario", "cta"),
        plaintext=bits if exp.get("scenario", "cta") == "kpa" else None,
    )
    keep_posteriors = kind == "exhaustive"
    soft = attacks.running_key_posteriors(
        obs, scenario, session_cfg.spec, session_cfg.model, session_cfg.policy,
        max_posterior_cells=(1 << 31) if keep_posteriors else 0,
    )

    base = {
        "run_id": f"attack-{trial}",
        "attack": kind,
        "scenario": scenario.kind,
        "M": session_cfg.spec.M,
        "S": session_cfg.spec.S,
        "dsr_kind": session_cfg.dsr_kind,
        "N": N,
    }
    if kind == "exhaustive":
        lf = LfsrSpec(lfsr_spec.degree, lfsr_spec.feedback, true_seed)
        result = attacks.exhaustive_likelihood_attack(soft, lf, params)
    elif kind == "fca":
        lf = LfsrSpec(lfsr_spec.degree, lfsr_spec.feedback, true_seed)
        result = attacks.fca_bit_flip(soft, lf, params)
    else:
        if enc_conf.get("kind") != "parallel_bank":
            raise ExperimentError("parallel_bank attack requires a bank ENC")
        bank_spec = session_cfg.enc_factory().spec
        result = attacks.attack_parallel_bank(soft, bank_spec, params)
        rows = []
        for lane in result.lanes:
            rows.append(dict(
                base,
                lane=lane.lane,
                ks_statistic=lane.ks_statistic,
                ks_pvalue=lane.ks_pvalue,
                windows=len(lane.window_fractions),
                control=control,
            ))
        return trial, rows

    rank = result.rank_of(true_seed)
    top = result.candidates[0][0] if result.candidates else 0
    rows = [dict(
        base,
        degree=lfsr_spec.degree,
        true_seed=f"0x{true_seed:x}",
        found_seed=f"0x{top:x}",
        success=int(result.success(true_seed)),
        rank=rank if rank is not None else -1,
        states_examined=result.states_examined,
        checks_evaluated=result.checks_evaluated,
        converged=int(result.converged),
    )]
    return trial, rows


def run_attack(raw: dict, workers: int = 1):
    exp = raw["experiment"]
    trials = exp.get("trials", 1)
    jobs = [(raw, t) for t in range(trials)]
    results = _run_pool(_attack_trial, jobs, workers)
    results.sort(key=lambda r: r[0])
    rows = [row for _, shard_rows in results for row in shard_rows]
    if exp["attack"] == "parallel_bank":
        fields = ["run_id", "attack", "scenario", "M", "S", "dsr_kind", "N",
                  "lane", "ks_statistic", "ks_pvalue", "windows", "control"]
    else:
        fields = ["run_id", "attack", "scenario", "M", "S", "dsr_kind", "N",
                  "degree", "true_seed", "found_seed", "success", "rank",
                  "states_examined", "checks_evaluated", "converged"]
    return fields, rows


# ---------------------------------------------------------------------------
# leakage

def run_leakage(raw: dict, workers: int = 1):
    cfg = build_session_config(raw)
    exp = raw["experiment"]
    samples = exp.get("samples", 1_000_000)
    bins = exp.get("bins", analysis.default_bins(cfg.spec.M))
    rng = _shard_rng(cfg.master_seed, "leakage", 0)
    k, theta = analysis.sample_key_channel(
        cfg.spec, cfg.model, cfg.policy, samples, rng
    )
    est = analysis.estimate_mutual_information(
        k, theta, bins=bins, M=cfg.spec.M,
        null_permutations=exp.get("null_permutations", 5), rng=rng,
    )
    row = {
        "run_id": "leakage-0",
        "M": cfg.spec.M,
        "S": cfg.spec.S,
        "gamma": gamma(cfg.spec),
        "dsr_kind": cfg.dsr_kind,
        "channel_kind": cfg.channel_kind,
        "samples": est.samples,
        "bins": est.bins,
        "mi_bits": est.mi,
        "mi_se": est.se,
        "leak_zero": int(est.statistically_zero()),
    }
    if exp.get("analytic", cfg.spec.M <= 64):
        row["rate_bits"] = analysis.capacity_per_qumode(
            cfg.spec, cfg.model, cfg.policy
        )
    else:
        row["rate_bits"] = ""
    fields = ["run_id", "M", "S", "gamma", "dsr_kind", "channel_kind",
              "samples", "bins", "mi_bits", "mi_se", "leak_zero", "rate_bits"]
    return fields, [row]


# ---------------------------------------------------------------------------
# scaling

def _scaling_session_factory(raw):
    enc_conf = raw["session"]["enc"]
    if enc_conf.get("kind", "lfsr") not in ("lfsr", "lfsr_keyed_poly"):
        raise ExperimentError("the scaling ladder needs an LFSR ENC (any m)")

    def make_session(spec, policy):
        cfg = build_session_config(raw)
        enc_factory, _ = make_enc_factory(enc_conf, spec)
        from .channel import make_noise_model

        ch = raw["session"]["channel"]
        model = make_noise_model(ch["kind"], spec.S, ch.get("sigma"))
        return SessionConfig(
            spec=spec, enc_factory=enc_factory, policy=policy, model=model,
            mapper=cfg.mapper, master_seed=cfg.master_seed,
            enc_kind=cfg.enc_kind, dsr_kind=cfg.dsr_kind,
            channel_kind=cfg.channel_kind,
        )

    return make_session


def run_scaling(raw: dict, workers: int = 1):
    cfg = build_session_config(raw)
    exp = raw["experiment"]
    gamma_target = exp.get("gamma", 2.66)
    s_values = exp.get("s_values", [1e2, 1e3, 1e4, 1e5])
    rows_data = analysis.gamma_scaling_experiment(
        gamma_target,
        s_values,
        raw["session"]["dsr"]["kind"],
        exp.get("n_per_point", 200_000),
        _scaling_session_factory(raw),
        lambda i: _shard_rng(cfg.master_seed, "scaling", i),
        mi_samples=exp.get("mi_samples", 200_000),
    )
    rows = [
        {
            "run_id": f"scaling-{i}",
            "S": r.S, "M": r.M, "gamma": r.gamma, "policy": r.policy,
            "n": r.n, "errors": r.errors, "ber": r.ber,
            "mi_bits": r.mi, "mi_se": r.mi_se, "leak_zero": int(r.leak_zero),
        }
        for i, r in enumerate(rows_data)
    ]
    fields = ["run_id", "S", "M", "gamma", "policy", "n", "errors", "ber",
              "mi_bits", "mi_se", "leak_zero"]
    return fields, rows


RUNNERS = {
    "simulate": run_simulate,
    "attack": run_attack,
    "leakage": run_leakage,
    "scaling": run_scaling,
}


def run_experiment(raw: dict, workers: int = 1):
    kind = raw["experiment"]["kind"]
    return RUNNERS[kind](raw, workers)
