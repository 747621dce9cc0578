"""Batch experiment runner.

Subcommands:

* run <config.toml>      -- execute the configured experiment, write the
                            CSV and its run manifest
* replay <manifest.json> -- re-execute a prior run and verify the CSV is
                            byte-identical
* validate <config.toml> -- schema-check only
* poly-table <file>      -- list and validate a connection-polynomial table

Exit codes: 0 ok, 2 validation error, 3 resource-cap refusal, 4 replay
mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import WorkCapExceeded
from .config import ConfigError, load_config
from .experiments import ExperimentError, run_experiment
from .keystream import PolynomialTable, lfsr_period

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RESOURCE_CAP = 3
EXIT_REPLAY_MISMATCH = 4

PERIOD_CHECK_MAX_DEGREE = 20


def _render_csv(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in fields})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _execute(raw: dict, workers: int) -> str:
    fields, rows = run_experiment(raw, workers=workers)
    return _render_csv(fields, rows)


def cmd_run(args) -> int:
    try:
        raw = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        text = _execute(raw, args.workers)
    except WorkCapExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RESOURCE_CAP
    except ExperimentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = raw["output"]
    csv_path = Path(out["csv"])
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(text)
    manifest = {
        "version": __version__,
        "config": raw,
        "csv": str(csv_path),
        "sha256": hashlib.sha256(text.encode()).hexdigest(),
        "rows": text.count("\n") - 1,
    }
    manifest_path = Path(out.get("manifest", str(csv_path) + ".manifest.json"))
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {csv_path} ({manifest['rows']} rows) and {manifest_path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    if not path.exists():
        print(f"manifest not found: {path}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        manifest = json.loads(path.read_text())
        raw = manifest["config"]
        recorded_sha = manifest["sha256"]
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"malformed manifest: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        text = _execute(raw, args.workers)
    except (WorkCapExceeded, ExperimentError, ConfigError) as exc:
        print(f"replay failed to execute: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if hashlib.sha256(text.encode()).hexdigest() == recorded_sha:
        print("replay OK: byte-identical output")
        return EXIT_OK
    # locate the first differing row for the diagnostic
    old_path = Path(manifest["csv"])
    old_lines = old_path.read_text().splitlines() if old_path.exists() else []
    new_lines = text.splitlines()
    for i, (a, b) in enumerate(zip(old_lines, new_lines)):
        if a != b:
            print(f"replay MISMATCH at row {i}:\n  recorded: {a}\n  replayed: {b}",
                  file=sys.stderr)
            break
    else:
        print("replay MISMATCH: row count or recorded file differs",
              file=sys.stderr)
    return EXIT_REPLAY_MISMATCH


def cmd_validate(args) -> int:
    try:
        load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print("config OK")
    return EXIT_OK


def cmd_poly_table(args) -> int:
    try:
        table = PolynomialTable.from_file(args.file)
    except (OSError, ValueError) as exc:
        print(f"table error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    bad = 0
    for degree in table.degrees():
        for mask in table.masks(degree):
            if degree <= PERIOD_CHECK_MAX_DEGREE:
                period = lfsr_period(mask, degree)
                ok = period == (1 << degree) - 1
                status = f"period {period} {'OK' if ok else 'NOT MAXIMAL'}"
                bad += not ok
            else:
                status = "period unchecked (degree above desk scale)"
            print(f"degree {degree:4d}  mask 0x{mask:x}  {status}")
    if bad:
        print(f"{bad} entries are not maximal-period", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="y00lab",
        description="Quantum-noise randomized cipher simulation laboratory",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(fn=cmd_run)

    p_replay = sub.add_parser("replay", help="re-run and verify a manifest")
    p_replay.add_argument("manifest")
    p_replay.add_argument("--workers", type=int, default=1)
    p_replay.set_defaults(fn=cmd_replay)

    p_val = sub.add_parser("validate", help="schema-check a config")
    p_val.add_argument("config")
    p_val.set_defaults(fn=cmd_validate)

    p_tab = sub.add_parser("poly-table", help="list/validate a polynomial table")
    p_tab.add_argument("file")
    p_tab.set_defaults(fn=cmd_poly_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
