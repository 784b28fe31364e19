"""Command line entry point.

Exit codes: 0 when every hard gate passes, 1 when a gate fails, 2 for
configuration or usage errors. The worker count for sampling loops comes
from the MORSESPLIT_THREADS environment variable.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import (ConfigError, analyze, format_ledger, load_config, verify_catalog,
                       write_summary)

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morsesplit",
                                description="Splitting reduction and critical group analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the full pipeline on one problem")
    a.add_argument("--config", required=True, help="JSON run configuration")
    a.add_argument("--out", help="output directory (overrides output_dir in the config)")

    v = sub.add_parser("verify", help="run every invariant check and print the ledger")
    g = v.add_mutually_exclusive_group()
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--catalog", action="store_true", help="verify the built-in catalog (default)")
    v.add_argument("--out", help="optional directory for per-problem reports")

    r = sub.add_parser("report", help="write summary.txt from a previous analyze run")
    r.add_argument("--out", required=True, help="directory holding report.json")
    return p


def _analyze(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    rep = analyze(cfg, out)
    for line in format_ledger(rep):
        if not line.startswith("PASS"):
            print(line)
    failed = len(rep.failures()) + len(rep.errors)
    print(f"{rep.name}: {'pass' if rep.passed else 'FAIL'} "
          f"({len(rep.ledger)} checks, {failed} failed)")
    if out:
        print(f"report written to {Path(out) / 'report.json'}")
    return EXIT_OK if rep.passed else EXIT_GATE


def _verify(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        rep = analyze(cfg, args.out)
        for line in format_ledger(rep):
            print(line)
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name}")
        return EXIT_OK if rep.passed else EXIT_GATE
    ok, reports = verify_catalog(out_dir=args.out)
    n_bad = sum(not r.passed for r in reports)
    print(f"catalog: {len(reports) - n_bad}/{len(reports)} problems pass")
    return EXIT_OK if ok else EXIT_GATE


def _report(args) -> int:
    try:
        path = write_summary(args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path.read_text(), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handler = {"analyze": _analyze, "verify": _verify, "report": _report}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
