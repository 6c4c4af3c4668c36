"""Command line entry point: ``extensor MANIFEST [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExtensorError
from .manifest import fixture_names, load
from .report import dumps, failures, run
from .suites import CHECKS, SUITES

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _tolerance(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected ID=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance for {key} is not a number: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extensor",
        description="Verify differentiation identities for extended tensor fields described by a JSON manifest.",
    )
    p.add_argument("manifest", nargs="?", help=f"manifest path or bundled fixture ({', '.join(fixture_names())})")
    p.add_argument("--suite", action="append", choices=SUITES, help="suite to run; repeatable (default: all)")
    p.add_argument("--seed", type=int, help="random seed (default: manifest value, else 0)")
    p.add_argument("--probes", type=int, help="probe points per check (default: manifest value, else 20)")
    p.add_argument("--tol", action="append", type=_tolerance, default=[], metavar="ID=VALUE",
                   help="override a tolerance by check id, e.g. commutators.16.5=1e-4 or 16.5=1e-4")
    p.add_argument("--report", type=Path, help="write the JSON report here (default: stdout)")
    p.add_argument("--list-checks", action="store_true", help="list check ids with default tolerances and exit")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_checks:
        for cid, (tol, text) in CHECKS.items():
            print(f"{cid:42s} {tol:<8g} {text}")
        return EXIT_OK
    if args.manifest is None:
        print("extensor: a manifest is required", file=sys.stderr)
        return EXIT_INPUT
    if args.probes is not None and args.probes < 1:
        print("extensor: --probes must be positive", file=sys.stderr)
        return EXIT_INPUT
    unknown = [k for k, _ in args.tol if k not in CHECKS and not any(c.split(".", 1)[1] == k for c in CHECKS)]
    if unknown:
        print(f"extensor: unknown check id in --tol: {', '.join(unknown)}", file=sys.stderr)
        return EXIT_INPUT
    try:
        manifest = load(args.manifest)
    except (OSError, ExtensorError) as exc:
        print(f"extensor: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = run(manifest, args.suite, args.seed, args.probes, dict(args.tol))
    text = dumps(report)
    if args.report:
        args.report.write_text(text)
    else:
        sys.stdout.write(text)
    bad = failures(report)
    for e in bad[:20]:
        what = e.get("error") or f"residual {e['residual']:.3g} > {e['tolerance']:g}"
        print(f"FAIL {e['id']} [{e['subject']}] probe {e['probe']}: {what}", file=sys.stderr)
    if len(bad) > 20:
        print(f"... and {len(bad) - 20} more failures", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_FAIL
