"""Command line entry point: ``cdfqa <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 physics or domain error.
The output root defaults to ``./cdfqa_out`` and can be moved with the
``CDFQA_OUTPUT`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .experiments import (
    OUTPUT_ENV,
    POOL,
    PRESETS,
    ConfigError,
    PhysicsError,
    gnuplot_script,
    load_config,
    output_root,
    run_config,
    run_preset,
    write_atomic,
)
from .measure import format_plan, layer_observables, plan_measurements
from .model import SpinChainSpec
from .protocol import ProtocolError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3

COUNT_SIZES = (4, 6, 10)


def report_measure_counts(
    protocols: Sequence[str] = POOL,
    sizes: Sequence[int] = COUNT_SIZES,
    field_hz: float = 0.4,
    verbose: bool = False,
) -> str:
    """Table of parallel measurement settings per layer for the LFI chain."""
    lines = ["protocol," + ",".join(f"N={n}" for n in sizes)]
    details = []
    for tag in protocols:
        counts = []
        for n in sizes:
            chain = SpinChainSpec(n, field_hz=field_hz)
            plan = plan_measurements(layer_observables(tag, chain))
            counts.append(str(plan.parallel_count))
            if verbose and n == sizes[0]:
                details.append(f"{tag} (N={n}):\n{format_plan(plan)}")
        lines.append(f"{tag}," + ",".join(counts))
    if details:
        lines.append("")
        lines.extend(details)
    return "\n".join(lines)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cdfqa", description="Feedback-based quantum algorithm simulations.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a TOML experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--out", help=f"output directory (default ${OUTPUT_ENV}/<name>)")
    p.add_argument("--gnuplot", action="store_true", help="also write plot.gp")

    p = sub.add_parser("preset", help="run a named figure preset")
    p.add_argument("name")
    p.add_argument("-o", "--out")
    p.add_argument("--gnuplot", action="store_true")

    sub.add_parser("list-presets", help="list presets and the figures they reproduce")

    p = sub.add_parser("measure-counts", help="parallel measurement settings per protocol")
    p.add_argument("--protocols", nargs="*", default=list(POOL))
    p.add_argument("--sizes", nargs="*", type=int, default=list(COUNT_SIZES))
    p.add_argument("--groups", action="store_true", help="print group memberships")

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    return ap


def _emit_gnuplot(paths: list[Path], log_scale: bool) -> None:
    if paths:
        write_atomic(paths[0].parent / "plot.gp", gnuplot_script(paths, log_scale))


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "list-presets":
            for p in PRESETS.values():
                note = f"  [{p.notes}]" if p.notes else ""
                print(f"{p.name:7s} figure {p.figure:>2s}  {p.title}{note}")
        elif args.verb == "measure-counts":
            print(report_measure_counts(args.protocols, args.sizes, verbose=args.groups))
        elif args.verb == "validate":
            cfg = load_config(args.config)
            n = len(cfg.curves())
            print(f"{args.config}: ok ({n} curve{'s' if n != 1 else ''})")
        elif args.verb == "preset":
            out = Path(args.out) if args.out else None
            paths = run_preset(args.name, out)
            if args.gnuplot:
                _emit_gnuplot(paths, PRESETS[args.name].log_scale)
            print(f"wrote {len(paths)} curves to {paths[0].parent if paths else output_root()}")
        elif args.verb == "run":
            cfg = load_config(args.config)
            out = Path(args.out) if args.out else None
            paths = run_config(cfg, out)
            if args.gnuplot:
                _emit_gnuplot(paths, bool(cfg.preset and PRESETS[cfg.preset].log_scale))
            print(f"wrote {len(paths)} curves to {paths[0].parent if paths else output_root()}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhysicsError, ProtocolError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
