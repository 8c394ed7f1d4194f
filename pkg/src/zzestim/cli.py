"""Command line front end: ``zzestim reproduce <id>`` and ``zzestim scan``.

Exit status is 0 on success, 1 for configuration errors and 2 for numerical
failures.  Outputs go to ``--out``, else ``$ZZESTIM_OUT``, else ``./results``;
files of a failed run are removed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import DegeneratePosterior
from .experiments import (EXPERIMENTS, SCAN_AXES, SCAN_METRICS, SEEDED, RunConfig, Table,
                          run_experiment, scan)
from .fisher import DegenerateSupport, SingularOutcome
from .qcore import InvalidState

log = logging.getLogger("zzestim")

OUT_ENV = "ZZESTIM_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
NUMERICAL_ERRORS = (InvalidState, DegenerateSupport, SingularOutcome, DegeneratePosterior,
                    FloatingPointError, np.linalg.LinAlgError)


class ConfigError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, sets: list[str], seed: int | None) -> RunConfig:
    values: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = _parse_value(raw.strip())
    if seed is not None:
        values["seed"] = seed
    try:
        return RunConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def render_csv(table: Table) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "results")


def write_outputs(outdir: Path, tables: dict[str, Table], manifest: dict) -> list[Path]:
    """Stage every file in a temporary directory, then move them into place."""
    outdir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=outdir))
    moved: list[Path] = []
    try:
        checksums = {}
        for name, table in tables.items():
            data = render_csv(table)
            (staging / f"{name}.csv").write_bytes(data)
            checksums[f"{name}.csv"] = hashlib.sha256(data).hexdigest()
        manifest = dict(manifest, outputs=checksums)
        (staging / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
        for f in sorted(staging.iterdir()):
            target = outdir / f.name
            os.replace(f, target)
            moved.append(target)
    except BaseException:
        for f in moved:
            f.unlink(missing_ok=True)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return moved


def _manifest(command: list[str], cfg: RunConfig, started: float, extra: dict) -> dict:
    return {
        "command": command,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_s": round(time.perf_counter() - started, 3),
        **extra,
    }


def parse_axis(text: str) -> tuple[str, np.ndarray]:
    """``name=a,b,c`` (explicit values) or ``name=start:stop:count`` (inclusive linspace)."""
    name, sep, body = text.partition("=")
    name = name.strip()
    if not sep or name not in SCAN_AXES:
        raise ConfigError(f"axis must look like NAME=values with NAME in {SCAN_AXES}, got {text!r}")
    try:
        if ":" in body:
            lo, hi, n = body.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            values = np.linspace(float(lo), float(hi), n)
        else:
            values = np.array([float(v) for v in body.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse axis values in {text!r}") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ConfigError(f"axis {name} needs finite values")
    return name, values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zzestim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of parameter overrides")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one parameter (repeatable)")
        p.add_argument("--seed", type=int, help="RNG seed (required for fig9 and table1)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        p.add_argument("--workers", type=int, default=1, help="worker processes for grid points")

    rp = sub.add_parser("reproduce", help="regenerate the data behind one figure or table")
    rp.add_argument("experiment", choices=EXPERIMENTS)
    common(rp)

    sp = sub.add_parser("scan", help="evaluate a metric over a one- or two-axis grid")
    sp.add_argument("--axis", action="append", required=True, metavar="NAME=VALUES",
                    help=f"NAME in {SCAN_AXES}; VALUES is a,b,c or start:stop:count")
    sp.add_argument("--metric", default="qfi", choices=SCAN_METRICS)
    sp.add_argument("--name", default="scan", help="stem of the output CSV")
    common(sp)
    return ap


def _run(args) -> tuple[dict[str, Table], RunConfig, dict]:
    cfg = load_config(args.config, args.set, args.seed)
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    if args.command == "reproduce":
        if args.experiment in SEEDED and cfg.seed is None:
            raise ConfigError(f"{args.experiment} needs an explicit seed (--seed)")
        return run_experiment(args.experiment, cfg, args.workers), cfg, {"experiment": args.experiment}
    axes = [parse_axis(a) for a in args.axis]
    try:
        table = scan(axes, args.metric, cfg, args.workers)
    except ValueError as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            raise
        raise ConfigError(str(exc)) from None
    extra = {"experiment": "scan", "axes": {n: v.tolist() for n, v in axes}, "metric": args.metric}
    return {args.name: table}, cfg, extra


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    started = time.perf_counter()
    try:
        tables, cfg, extra = _run(args)
        files = write_outputs(output_dir(args.out), tables,
                              _manifest(["zzestim"] + argv, cfg, started, extra))
    except ConfigError as exc:
        print(f"zzestim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"zzestim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"zzestim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
