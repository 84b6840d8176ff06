"""Command line entry point: ``gcflow <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import SUBCOMMANDS, parse_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcflow", description="Level-set motion by general curvature.")
    ap.add_argument("command", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", required=True, type=Path, help="key=value experiment file")
    ap.add_argument("--out-dir", type=Path, default=None, help="overrides out_dir from the config")
    ap.add_argument("--seed", type=int, default=None, help="overrides seed from the config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.experiment not in SUBCOMMANDS[args.command]:
        allowed = ", ".join(SUBCOMMANDS[args.command])
        print(f"config error: experiment {cfg.experiment!r} is not run by '{args.command}' (expects {allowed})",
              file=sys.stderr)
        return 2
    res = run_experiment(cfg, args.out_dir)
    for m in res.metrics:
        print(m.line())
    return res.exit_status


if __name__ == "__main__":
    sys.exit(main())
