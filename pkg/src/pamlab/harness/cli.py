"""``pamlab <command> --config <path> [--out <dir>] [--seed N] [--key value ...]``

Exit status: 0 success, 1 suite or run failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from .config import TASKS, ConfigError


def _runner(task):
    if task == "verify":
        from .verify import run
    elif task == "errmap":
        from .errmap import run
    elif task == "derivgrid":
        from .derivgrid import run
    elif task == "costmodel":
        from .costmodel import run
    elif task == "train":
        from .train import run
    else:
        from .train import run_sweep as run
    return run


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pamlab", description="Piecewise affine arithmetic: verification, tables and training.")
    p.add_argument("command", choices=TASKS)
    p.add_argument("--config", help="key = value file; omitted keys take their defaults")
    for key in config_mod.keys():
        if key == "task":
            continue
        p.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE")
    return p


def resolve(argv) -> config_mod.RunConfig:
    args = build_parser().parse_args(argv)
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    overrides = {"task": args.command}
    for key in config_mod.keys():
        raw = getattr(args, key, None)
        if key != "task" and raw is not None:
            overrides[key] = config_mod.parse_value(key, raw)
    return cfg.replace(**overrides)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
    except ConfigError as e:
        print(f"pamlab: config error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)
    out_dir = Path(cfg.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"pamlab: cannot create output directory {out_dir}: {e}", file=sys.stderr)
        return 2
    return _runner(cfg.task)(cfg, out_dir)


if __name__ == "__main__":
    sys.exit(main())
