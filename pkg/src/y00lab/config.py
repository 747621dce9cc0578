"""Run configuration: TOML files with a [session] and an [experiment]
section, schema-validated with unknown keys rejected.

Hex-valued fields (feedback masks, seeds, subkeys) are strings like
"0x8805"; subkeys are 64-hex-character AES-256 keys.
"""

from __future__ import annotations

import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import make_noise_model
from .constellation import ConstellationSpec
from .dsr import make_policy
from .endpoints import SessionConfig
from .keystream import (
    KeyedMapperSpec,
    Lfsr,
    LfsrSpec,
    ParallelBank,
    ParallelBankSpec,
    PolynomialTable,
    sample_connection_polynomial,
)


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "session": {
        "master_seed": int,
        "constellation": {"M": int, "S": (int, float)},
        "enc": {
            "kind": str, "degree": int, "feedback": str, "seed": str,
            "poly_key": str, "table": str, "subkeys": list,
        },
        "mapper": {"keyed": bool, "aux_seed": str},
        "dsr": {"kind": str, "wedges": int},
        "channel": {"kind": str, "sigma": (int, float)},
    },
    "experiment": {
        "kind": str,
        "n": int,
        "attack": str,
        "scenario": str,
        "N": int,
        "N1": int,
        "trials": int,
        "max_candidates": int,
        "fca_rounds": int,
        "check_weight": int,
        "max_check_degree": int,
        "max_states": int,
        "control": bool,
        "samples": int,
        "bins": int,
        "null_permutations": int,
        "analytic": bool,
        "gamma": (int, float),
        "s_values": list,
        "n_per_point": int,
        "mi_samples": int,
    },
    "output": {"csv": str, "manifest": str},
}

_REQUIRED = {
    "session": {"master_seed", "constellation", "enc", "dsr", "channel"},
    "experiment": {"kind"},
    "output": {"csv"},
}


def _check(node: Any, schema: Any, path: str):
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path}: expected a table")
        for key, val in node.items():
            if key not in schema:
                raise ConfigError(f"{path}: unknown key {key!r}")
            _check(val, schema[key], f"{path}.{key}")
    else:
        if isinstance(node, bool) and schema is not bool:
            raise ConfigError(f"{path}: unexpected boolean")
        if not isinstance(node, schema):
            raise ConfigError(f"{path}: wrong type {type(node).__name__}")


def validate_config(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown section {key!r}")
    for section, required in _REQUIRED.items():
        if section not in raw:
            raise ConfigError(f"missing section [{section}]")
        for key in required:
            if key not in raw[section]:
                raise ConfigError(f"missing key {section}.{key}")
    _check(raw, _SCHEMA, "config")
    kind = raw["experiment"]["kind"]
    if kind not in ("simulate", "attack", "leakage", "scaling"):
        raise ConfigError(f"experiment.kind: unknown kind {kind!r}")
    if kind == "attack" and "attack" not in raw["experiment"]:
        raise ConfigError("experiment.attack is required for attack runs")
    # constructing the session surfaces the remaining value errors early
    try:
        build_session_config(raw)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return raw


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}")
    return validate_config(raw)


def _hex_int(value: str, name: str) -> int:
    try:
        return int(value, 16)
    except ValueError:
        raise ConfigError(f"{name}: not a hex value: {value!r}")


def make_enc_factory(enc: dict, spec: ConstellationSpec):
    kind = enc.get("kind", "lfsr")
    if kind in ("lfsr", "lfsr_keyed_poly"):
        if "degree" not in enc or "seed" not in enc:
            raise ConfigError("enc.degree and enc.seed are required for LFSRs")
        degree = enc["degree"]
        seed = _hex_int(enc["seed"], "enc.seed")
        if kind == "lfsr":
            if "feedback" not in enc:
                raise ConfigError("enc.feedback is required for kind=lfsr")
            feedback = _hex_int(enc["feedback"], "enc.feedback")
        else:
            if "poly_key" not in enc:
                raise ConfigError("enc.poly_key is required for keyed polynomials")
            table = (
                PolynomialTable.from_file(enc["table"])
                if "table" in enc else PolynomialTable.builtin()
            )
            feedback = sample_connection_polynomial(
                _hex_int(enc["poly_key"], "enc.poly_key"), degree, table
            )
        lfsr_spec = LfsrSpec(degree=degree, feedback=feedback, seed=seed)
        return (lambda: Lfsr(lfsr_spec)), lfsr_spec
    if kind == "parallel_bank":
        if "subkeys" not in enc:
            raise ConfigError("enc.subkeys is required for the parallel bank")
        subkeys = tuple(bytes.fromhex(s) for s in enc["subkeys"])
        bank_spec = ParallelBankSpec(m=spec.m, subkeys=subkeys)
        return (lambda: ParallelBank(bank_spec)), bank_spec
    raise ConfigError(f"enc.kind: unknown kind {kind!r}")


def build_session_config(raw: dict) -> SessionConfig:
    s = raw["session"]
    c = s["constellation"]
    spec = ConstellationSpec(M=c["M"], S=float(c["S"]))
    enc_factory, _ = make_enc_factory(s["enc"], spec)
    dsr = s["dsr"]
    policy = make_policy(dsr["kind"], dsr.get("wedges"), spec=spec)
    ch = s["channel"]
    model = make_noise_model(ch["kind"], spec.S, ch.get("sigma"))
    mapper = None
    if s.get("mapper", {}).get("keyed"):
        aux_hex = s["mapper"].get("aux_seed")
        if aux_hex is None:
            raise ConfigError("mapper.aux_seed is required when mapper.keyed")
        aux = int(aux_hex, 16).to_bytes(32, "big")
        mapper = KeyedMapperSpec(aux_seed=aux)
    return SessionConfig(
        spec=spec,
        enc_factory=enc_factory,
        policy=policy,
        model=model,
        mapper=mapper,
        master_seed=s["master_seed"],
        enc_kind=s["enc"].get("kind", "lfsr"),
        dsr_kind=dsr["kind"],
        channel_kind=ch["kind"],
    )
