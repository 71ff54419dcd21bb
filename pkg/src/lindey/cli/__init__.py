"""Command-line front end: ``lindey --experiment <name> [options]``."""
from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, KEYS, RunSettings, UsageError, build_settings, convert, read_config_file
from .emit import emit_curve
from .manifest import RunManifest, read_manifest
from .suite import run_suite

__all__ = ["build_parser", "emit_curve", "main", "parse_config", "read_manifest", "run_suite", "RunManifest"]

_HELP = {
    "input": "input state: n0, tf or noon",
    "n": "particle number N",
    "noise": "jump operator: sz, s-, s+, alpha or none",
    "gamma": "noise rate (>= 0)",
    "delta": "energy shift during the hold (default 0.5)",
    "j": "tunnelling strength (default 1)",
    "tbs_first": "first beam-splitter duration",
    "tbs_second": "second beam-splitter duration",
    "noise_placement": "hold (noise during the hold only) or whole",
    "dt": "RK4 step (default 1e-3)",
    "convergence_check": "re-run every hold at dt/2 and compare",
    "thold_min": "first holding time of the grid",
    "thold_max": "last holding time of the grid",
    "thold_step": "grid spacing",
    "estimator": "imbalance or parity (default: imbalance for N0 and N=1, parity otherwise)",
    "experiment": "one of: " + ", ".join(EXPERIMENTS),
    "out_dir": "output directory (default lindey-out)",
    "format": "comma list of csv, json, svg (default csv,svg)",
    "n_list": "particle numbers as start:stop:step or a comma list",
    "gammas": "comma list of noise rates for multi-rate experiments",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lindey",
        description="Open two-mode interferometer: sensitivity sweeps, insensitivity points and N-scaling.",
        epilog="A --config file holds 'key = value' lines with the same keys (dashes or underscores); "
        "flags override the file. LINDEY_THREADS caps worker processes (0 = one per CPU).",
    )
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    for key in KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, metavar=key.upper(), help=_HELP[key])
    return p


def parse_config(argv: list[str]) -> RunSettings:
    """Merge the optional config file with flags; raises UsageError naming the bad key."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    values = read_config_file(ns.config) if ns.config else {}
    for key in KEYS:
        raw = getattr(ns, key)
        if raw is not None:
            values[key] = convert(key, raw)
    return build_settings(values)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        settings = parse_config(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lindey: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse already printed its message
        return int(exc.code or 0)
    return run_suite(settings.experiment, settings)
