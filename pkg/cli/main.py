"""nmpzero command line.

    nmpzero zeros --fixture case1
    nmpzero rank --network grid.json --op op.json --droop node3=10
    nmpzero verify --fixture random-seed-42

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 verification failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger
from pydantic import ValidationError

from config.settings import settings
from core.errors import InputError, NmpZeroError
from core.types import Command, OutputFormat, RunConfig
from orchestrator.pipeline import run


def _droop_directive(text: str) -> Tuple[str, float]:
    node, sep, gain = text.partition("=")
    if not sep or not node:
        raise argparse.ArgumentTypeError(f"expected NODE=GAIN, got '{text}'")
    try:
        return node.strip(), float(gain)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gain in '{text}' is not a number")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmpzero",
        description="Locate, bound and reshape the NMP zeros of converter-dominated grids.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--network", type=Path, metavar="PATH", help="grid model JSON")
    parser.add_argument("--op", type=Path, metavar="PATH", help="operating point JSON")
    parser.add_argument("--device", type=Path, metavar="PATH", help="converter device JSON")
    parser.add_argument("--fixture", metavar="NAME", help="shipped fixture or random-seed-N")
    parser.add_argument("--grid-min", type=float, metavar="W", help="lowest frequency, rad/s")
    parser.add_argument("--grid-max", type=float, metavar="W", help="highest frequency, rad/s")
    parser.add_argument("--grid-points", type=int, metavar="N")
    parser.add_argument(
        "--droop",
        type=_droop_directive,
        action="append",
        default=[],
        metavar="NODE=GAIN",
        help="Q-U droop gain at a node label or 1-based position (repeatable)",
    )
    parser.add_argument("--out", type=Path, default=Path("out"), metavar="DIR")
    parser.add_argument(
        "--format", choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value
    )
    parser.add_argument("--tol-rel", type=float, metavar="X", help="verify tolerance")
    parser.add_argument("--omega-c", type=float, metavar="W", help="bound frequency, rad/s")
    parser.add_argument(
        "--open-loop-rhp-poles", type=int, default=0, metavar="P", help="for nyquist"
    )
    parser.add_argument("--log-file", type=Path, metavar="PATH")
    return parser


def configure_logging(log_file: Optional[Path] = None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=settings.log_level)
    if log_file is not None:
        logger.add(log_file, level="DEBUG", rotation="10 MB")


def _config(args: argparse.Namespace) -> RunConfig:
    droop: Dict[str, float] = {}
    for node, gain in args.droop:
        droop[node] = droop.get(node, 0.0) + gain
    return RunConfig(
        command=args.command,
        network=args.network,
        op=args.op,
        device=args.device,
        fixture=args.fixture,
        grid_min=args.grid_min,
        grid_max=args.grid_max,
        grid_points=args.grid_points,
        droop=droop,
        out=args.out,
        format=args.format,
        tol_rel=args.tol_rel,
        omega_c=args.omega_c,
        open_loop_rhp_poles=args.open_loop_rhp_poles,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_file)
    try:
        written: List[Path] = run(_config(args))
    except ValidationError as e:
        first = e.errors()[0]
        logger.error(f"Invalid input: {first['msg']}")
        print(f"InputError: {first['msg']}", file=sys.stderr)
        return InputError.exit_code
    except json.JSONDecodeError as e:
        logger.error(f"Malformed JSON input: {e}")
        print(f"InputError: malformed JSON ({e})", file=sys.stderr)
        return InputError.exit_code
    except NmpZeroError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
