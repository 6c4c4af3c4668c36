"""Assembling and serializing verification reports.

Reports are plain JSON with sorted keys. Apart from the ``wall_clock_s``
fields they depend only on the manifest bytes, the seed and the options, so
two runs can be compared with `strip_timing`.
"""

from __future__ import annotations

import json
import math
import time
from typing import Any, Iterable, Mapping

from . import __version__
from .manifest import Manifest
from .suites import RUNNERS, SUITES, Context

TIMING_KEY = "wall_clock_s"


def run(
    manifest: Manifest,
    suites: Iterable[str] | None = None,
    seed: int | None = None,
    probes: int | None = None,
    tolerances: Mapping[str, float] | None = None,
) -> dict:
    chosen = list(SUITES) if suites is None else [s for s in SUITES if s in set(suites)]
    unknown = set(suites or ()) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites: {', '.join(sorted(unknown))}")
    if not chosen:
        raise ValueError("no suites selected")
    ctx = Context(
        manifest,
        manifest.params.seed if seed is None else seed,
        manifest.params.probes if probes is None else probes,
        dict(tolerances or {}),
    )
    start = time.perf_counter()
    results = {}
    for name in chosen:
        t0 = time.perf_counter()
        entries = RUNNERS[name](ctx)
        results[name] = {
            "entries": entries,
            "checks": len(entries),
            "failures": sum(1 for e in entries if not e["pass"]),
            "pass": all(e["pass"] for e in entries),
            TIMING_KEY: round(time.perf_counter() - t0, 3),
        }
    return {
        "artifact": "extensor",
        "version": __version__,
        "manifest": {"name": manifest.name, "sha256": manifest.digest},
        "seed": ctx.seed,
        "probes": ctx.probes,
        "tolerance_overrides": dict(sorted(ctx.overrides.items())),
        "suites": results,
        "pass": all(r["pass"] for r in results.values()),
        TIMING_KEY: round(time.perf_counter() - start, 3),
    }


def _finite(x: Any) -> Any:
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def dumps(report: Mapping[str, Any]) -> str:
    return json.dumps(_finite(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def strip_timing(report: Any) -> Any:
    if isinstance(report, dict):
        return {k: strip_timing(v) for k, v in report.items() if k != TIMING_KEY}
    if isinstance(report, list):
        return [strip_timing(v) for v in report]
    return report


def failures(report: Mapping[str, Any]) -> list[dict]:
    return [e for s in report["suites"].values() for e in s["entries"] if not e["pass"]]
