"""Command-line front end.

Subcommands: `ber`, `export-channel`, `optimize-sim`, `validate-config`.
Every flag of the form ``--set section.key=value`` overrides the loaded
config; `--seed` overrides the config seed and is mandatory for `ber`.
Each run writes a resolved copy of its configuration next to the outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .config import load_config
from .errors import ConfigurationError, NumericalFailure
from .simulate import (export_channel, resolved_config_path, run_ber, run_optimize,
                       summarize_records, write_ber_csv, write_channel_csv,
                       write_resolved_config, write_trace_csv)


def _add_common(parser: argparse.ArgumentParser, *, seed_required: bool = False) -> None:
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (section.key=value)")
    parser.add_argument("--seed", type=int, required=seed_required,
                        help="master seed (overrides the config seed)")


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_validate(args) -> int:
    _load(args)
    print("config OK")
    return 0


def _cmd_ber(args) -> int:
    cfg = _load(args)
    records = run_ber(cfg)
    write_ber_csv(records, args.out)
    write_resolved_config(cfg, resolved_config_path(args.out))
    print(summarize_records(records))
    print(f"wrote {args.out}")
    return 0


def _cmd_export(args) -> int:
    cfg = _load(args)
    chan, _ = export_channel(cfg, waveform=args.waveform)
    write_channel_csv(chan, args.out)
    write_resolved_config(cfg, resolved_config_path(args.out))
    print(f"wrote {args.out} ({chan.domain}, {chan.hbar.shape[0]}x{chan.hbar.shape[1]})")
    return 0


def _cmd_optimize(args) -> int:
    cfg = _load(args)
    result = run_optimize(cfg)
    write_trace_csv(result, args.out)
    write_resolved_config(cfg, resolved_config_path(args.out))
    print(f"objective {result.trace[0]:.6e} -> {result.trace[-1]:.6e} "
          f"in {result.iterations} iterations")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpdd-sim",
        description="Doubly-dispersive MIMO link simulator with stacked metasurfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    ber = sub.add_parser("ber", help="Monte-Carlo BER sweep")
    _add_common(ber, seed_required=True)
    ber.add_argument("--out", default="ber.csv", help="output CSV path")
    ber.set_defaults(handler=_cmd_ber)

    export = sub.add_parser("export-channel", help="write |Hbar| and path metadata")
    _add_common(export)
    export.add_argument("--waveform", choices=["ofdm", "otfs", "afdm", "td"], default=None,
                        help="override the config waveform ('td' exports the raw assembly)")
    export.add_argument("--out", default="channel.csv", help="output CSV path")
    export.set_defaults(handler=_cmd_export)

    opt = sub.add_parser("optimize-sim", help="run the SIM phase ascent")
    _add_common(opt)
    opt.add_argument("--out", default="trace.csv", help="objective-trace CSV path")
    opt.set_defaults(handler=_cmd_optimize)

    val = sub.add_parser("validate-config", help="check a config file")
    _add_common(val)
    val.set_defaults(handler=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
