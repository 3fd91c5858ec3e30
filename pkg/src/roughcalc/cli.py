"""Command-line experiment runner.

``python -m roughcalc <experiment> [--config FILE] [--key value ...]``

Parameters are resolved as defaults, then the JSON config, then flags.
Each run writes ``<name>.csv`` and ``<name>.json`` into ``--out`` (default:
``$ROUGHCALC_OUT`` or the working directory). Exit codes: 0 pass, 1 check
failed, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import EXPERIMENTS
from .rde import RdeError
from .sewing import SewingError
from .signature import NonConvergenceError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "ROUGHCALC_OUT"


class ConfigError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    return v


def resolve_params(name: str, config: dict, flags: dict) -> dict:
    """Merge defaults, config and flags; reject unknown keys and out-of-range values."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    table = EXPERIMENTS[name][1]
    unknown = sorted(set(config) - set(table))
    if unknown:
        raise ConfigError(f"unknown config keys for {name}: {unknown}")
    out = {}
    for key, (typ, default, check) in table.items():
        raw = flags.get(key)
        if raw is None:
            raw = config.get(key, default)
        try:
            val = typ(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None
        if typ is float and not np.isfinite(val):
            raise ConfigError(f"{key} must be finite")
        if check is not None and not check(val):
            raise ConfigError(f"{key}={val!r} out of range")
        out[key] = val
    return out


def write_outputs(name: str, params: dict, outcome, out_dir: Path) -> tuple:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / f"{name}.csv", out_dir / f"{name}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(outcome.header)
        for row in outcome.rows:
            w.writerow([_fmt(v) for v in row])
    summary = {"name": name, "params": params, "metrics": outcome.metrics, "pass": bool(outcome.passed)}
    with open(json_path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def _write_failure(name, params, exc, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    diag = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("step", "state", "diffs"):
        if getattr(exc, attr, None) is not None:
            diag[attr] = np.asarray(getattr(exc, attr)).tolist()
    summary = {"name": name, "params": params, "metrics": {}, "pass": False, "diagnostics": diag}
    with open(out_dir / f"{name}.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughcalc", description="Run a numerical experiment.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, (_, table) in EXPERIMENTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file with parameters")
        sp.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or .)")
        for key, (typ, default, _) in table.items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=f"default {default}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_CONFIG
    name = args.experiment
    flags = {k: v for k, v in vars(args).items() if k not in ("experiment", "config", "out")}
    out_dir = args.out or Path(os.environ.get(OUT_ENV, "."))
    try:
        config = {}
        if args.config is not None:
            config = json.loads(args.config.read_text())
            if not isinstance(config, dict):
                raise ConfigError("config must be a JSON object")
        params = resolve_params(name, config, flags)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    runner = EXPERIMENTS[name][0]
    try:
        with np.errstate(over="raise", invalid="raise", divide="ignore"):
            outcome = runner(params)
    except (RdeError, SewingError, NonConvergenceError, FloatingPointError) as e:
        _write_failure(name, params, e, out_dir)
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(name, params, outcome, out_dir)
    status = "pass" if outcome.passed else "FAIL"
    print(f"{name}: {status} " + " ".join(f"{k}={_fmt(v)}" for k, v in outcome.metrics.items()))
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
