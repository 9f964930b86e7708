"""otfs-jrc command line: run, validate, list-experiments.

Exit codes: 0 success, 1 at least one failed cell, 2 configuration error.
Worker processes: OTFS_JRC_THREADS (default 1).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import (REGISTRY, THREADS_ENV, ConfigError, has_errors, load_config, run,
                      validate)

EXIT_OK, EXIT_FAILED_CELLS, EXIT_CONFIG = 0, 1, 2


def _load(path):
    cfg, diags = load_config(path)
    return cfg, diags + validate(cfg)


def _print_diags(diags, stream):
    for d in diags:
        print(str(d), file=stream)


def cmd_validate(args) -> int:
    try:
        cfg, diags = _load(args.config)
    except ConfigError as exc:
        _print_diags(exc.diagnostics, sys.stdout)
        return EXIT_CONFIG
    _print_diags(diags, sys.stdout)
    if has_errors(diags):
        return EXIT_CONFIG
    print(f"OK {cfg.experiment}: {len(cfg.scenario.paths)} path count(s) x "
          f"{cfg.sweep.values().size} SNR point(s) x {cfg.trials} trial(s)")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg, diags = _load(args.config)
    except ConfigError as exc:
        _print_diags(exc.diagnostics, sys.stderr)
        return EXIT_CONFIG
    if has_errors(diags):
        _print_diags(diags, sys.stderr)
        return EXIT_CONFIG
    _print_diags([d for d in diags if d.level == "warning"], sys.stderr)
    if args.trials is not None:
        cfg.trials = args.trials
    res = run(cfg, output=args.output, workers=args.workers)
    print(f"wrote {res.csv_path} ({len(res.rows)} rows) and {res.sidecar_path}")
    if res.failures:
        print(f"{len(res.failures)} cell failure(s); see the JSON sidecar", file=sys.stderr)
    return res.exit_code


def cmd_list(args) -> int:
    width = max(len(k) for k in REGISTRY)
    for name, exp in REGISTRY.items():
        print(f"{name.ljust(width)}  {exp.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfs-jrc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a sweep and write CSV + JSON sidecar")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="CSV path (overrides the config)")
    r.add_argument("--trials", type=int, help="override the trial count")
    r.add_argument("--workers", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config and print diagnostics")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-experiments", help="list experiment kinds")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
