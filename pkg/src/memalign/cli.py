"""Command-line front end.

Subcommands: ``run`` (one experiment -> report.json, optional .membank
snapshot), ``sweep`` (one parameter over a value list -> sweep.csv),
``inspect`` (print a snapshot's contents). Exit codes: 0 success, 2
configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

from .config import ExperimentConfig, load_config
from .errors import ConfigError, MemalignError
from .harness import (
    SWEEPABLE_PARAMETERS,
    run_experiment,
    report_to_json,
    sweep,
    sweep_to_csv,
    variance_proxy,
)
from .memory import load_snapshot, snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

OUT_DIR_ENV = "MEMALIGN_OUT_DIR"


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_out_dir(config: ExperimentConfig, flag: Optional[str]) -> Path:
    if flag:
        return Path(flag)
    if config.out_dir:
        return Path(config.out_dir)
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    result = run_experiment(config)
    out_dir = _resolve_out_dir(config, args.out_dir)
    report_path = out_dir / "report.json"
    _atomic_write(report_path, report_to_json(result).encode("utf-8"))
    print(f"wrote {report_path}")
    if args.memory_snapshot:
        snap_path = Path(args.memory_snapshot)
        _atomic_write(snap_path, snapshot(result.bank))
        print(f"wrote {snap_path}")
    acc = result.report.target_accuracy
    print(
        f"target_accuracy={acc:.4f} "
        f"miss_rate_minibatch={result.report.miss_rate_minibatch:.4f} "
        f"miss_rate_memory={result.report.miss_rate_memory:.4f}"
    )
    return EXIT_OK


def _parse_values(parameter: str, raw: str) -> List[object]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("values: empty list")
    if parameter == "K":
        return [int(p) for p in parts]
    if parameter in ("lambda3", "gamma"):
        return [float(p) for p in parts]
    return parts  # policy variants


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    try:
        values = _parse_values(args.param, args.values)
    except ValueError as exc:
        raise ConfigError(f"values: {exc}") from exc
    entries = sweep(config, args.param, values, jobs=args.jobs)
    out_dir = _resolve_out_dir(config, args.out_dir)
    csv_path = out_dir / "sweep.csv"
    _atomic_write(csv_path, sweep_to_csv(entries).encode("utf-8"))
    print(f"wrote {csv_path}")
    for e in entries:
        acc = e.mean("target_accuracy")
        print(f"{args.param}={e.value}: target_accuracy_mean={acc:.4f}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    data = Path(args.snapshot).read_bytes()
    bank = load_snapshot(data)
    print(
        f"categories={bank.num_categories} dim={bank.dim} "
        f"policy={bank.policy.variant} gamma={bank.policy.gamma} "
        f"generation={bank.build_generation} stored={bank.total_count}"
    )
    proxy = variance_proxy(bank)
    print("category  count  capacity  variance_proxy")
    for c in bank.categories():
        print(
            f"{c:>8}  {bank.count(c):>5}  {bank.capacities[c]:>8}  "
            f"{proxy[c]:.6f}"
        )
    populated = [v for c, v in proxy.items() if bank.count(c) >= 2]
    mean = sum(populated) / len(populated) if populated else 0.0
    print(f"variance_proxy_mean={mean:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memalign",
        description="Memory-based instance alignment: experiments, sweeps, "
        "snapshot inspection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("config", help="path to JSON config file")
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--out-dir", default=None, help="directory for report.json")
    run_p.add_argument(
        "--memory-snapshot",
        default=None,
        metavar="PATH",
        help="also write the final memory bank as a .membank file",
    )
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run one parameter over a value list")
    sweep_p.add_argument("config", help="path to JSON config file")
    sweep_p.add_argument(
        "--param", required=True, choices=SWEEPABLE_PARAMETERS, help="swept parameter"
    )
    sweep_p.add_argument(
        "--values", required=True, help="comma-separated values, e.g. 1,10,30"
    )
    sweep_p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sweep_p.add_argument("--seed", type=int, default=None, help="override config seed")
    sweep_p.add_argument("--out-dir", default=None, help="directory for sweep.csv")
    sweep_p.set_defaults(func=cmd_sweep)

    inspect_p = sub.add_parser("inspect", help="print a .membank snapshot")
    inspect_p.add_argument("snapshot", help="path to .membank file")
    inspect_p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MemalignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
