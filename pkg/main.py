import argparse
import logging
import os
import sys
from typing import List, Sequence

# Add current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config.settings import CONFIG_ERRORS, LOG_LEVEL
from core.convergence import SURROGATES
from core.mapdist_service import MapdistService
from utils.families import KINDS
from utils.logging_setup import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGES = 3

FLOAT_FORMAT = "%.17g"


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", default="euclidean:1",
                   help="euclidean:<k> | circle:arc | circle:chord | product:<spec,...>")
    p.add_argument("--alpha", type=float, default=None, help="penalty ceiling (default from config)")
    p.add_argument("--exhaustion", default=None, help="full | boxes:<n> | masks:<file,...> (default full)")
    p.add_argument("--jobs", type=int, default=None, help="worker threads for pairwise tables")


def _add_family(p: argparse.ArgumentParser) -> None:
    _add_common(p)
    p.add_argument("--family", required=True, help="manifest file or directory holding one")
    p.add_argument("--cauchy-threshold", type=float, default=None)
    p.add_argument("--window", type=float, default=None, help="tail fraction used for verdicts")
    p.add_argument("--plot", default=None, help="image (.png/.svg/.pdf) or gnuplot data file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapdist", description="Distances and convergence of partial maps")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="distance between two map files")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mask", default=None, help="mask file or 'full'; restricts to one set")

    p = sub.add_parser("converge", help="Cauchy check and convergence to the constructed limit")
    _add_family(p)
    p.add_argument("--limit-out", default=None)
    p.add_argument("--surrogate", choices=SURROGATES, default=None, help="tail limit stand-in (default from config)")

    p = sub.add_parser("limit", help="construct the limit of a Cauchy family")
    _add_family(p)
    p.add_argument("--limit-out", default=None)
    p.add_argument("--surrogate", choices=SURROGATES, default=None, help="tail limit stand-in (default from config)")

    p = sub.add_parser("radius", help="bounds on the radius of convergence")
    _add_family(p)
    p.add_argument("--perturbation", default=None, help="manifest of a same-domain convergent family")

    p = sub.add_parser("example", help="write a generated example family")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--m-list", type=_int_list, default=None)
    p.add_argument("--t-list", type=_float_list, default=None)
    p.add_argument("--levels", type=int, default=None, dest="n_levels")
    p.add_argument("--power", type=float, default=None)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _emit(df) -> None:
    sys.stdout.write(df.to_csv(index=False, float_format=FLOAT_FORMAT))


def _dispatch(args: argparse.Namespace, service: MapdistService) -> int:
    if args.command == "dist":
        _emit(service.distance(args.a, args.b, args.target, args.mask, args.exhaustion))
        return EXIT_OK

    if args.command == "example":
        params = {
            "q": args.q,
            "depth": args.depth,
            "m_list": args.m_list,
            "t_list": args.t_list,
            "n_levels": args.n_levels,
            "power": args.power,
            "cells": args.cells,
            "seed": args.seed,
        }
        _emit(service.example(args.kind, args.out, params))
        return EXIT_OK

    service.update_settings(threshold=args.cauchy_threshold, window=args.window,
                            surrogate=getattr(args, "surrogate", None))
    if args.command == "converge":
        verdict, table = service.converge(args.family, args.target, args.exhaustion, args.limit_out, args.plot)
        _emit(table)
        return EXIT_DIVERGES if verdict == "diverges" else EXIT_OK
    if args.command == "limit":
        _, summary = service.limit(args.family, args.target, args.exhaustion, args.limit_out, args.plot)
        _emit(summary)
        return EXIT_OK
    report = service.radius(args.family, args.target, args.exhaustion, args.perturbation, args.plot)
    _emit(report.as_frame())
    return EXIT_OK


def run_command(argv: Sequence[str]) -> int:
    """Run one CLI command; CSV goes to stdout and the exit code is returned."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT

    if args.verbose:
        root = logging.getLogger()
        root.setLevel(logging.DEBUG)
        for h in root.handlers:
            h.setLevel(logging.DEBUG)

    service = MapdistService()
    try:
        service.update_settings(alpha=getattr(args, "alpha", None), jobs=getattr(args, "jobs", None))
        return _dispatch(args, service)
    except (ValueError, OSError) as e:
        logger.debug(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT


def main(argv: List[str] | None = None) -> int:
    setup_logging(getattr(logging, LOG_LEVEL, logging.INFO))
    for err in CONFIG_ERRORS:
        logger.warning(err)
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
