"""
MIT License

Copyright (c) 2024 the perco.py developers

Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""
import argparse
import logging
import sys

from typing import Any, Dict, List, Optional, Sequence

import ujson

from . import __version__
from .enums import Check
from .errors import PercoException, UsageError
from .experiment import ExperimentSpec
from .lab import Laboratory

LOG = logging.getLogger("perco")

#: The checks each subcommand enables. ``run`` and ``sweep`` use the experiment's own.
SUBCOMMAND_CHECKS = {
    "sample": (),
    "classify": (Check.goodness,),
    "renorm": (Check.event_h, Check.fat_set),
    "iso": (Check.isoperimetry,),
    "walk": (Check.walk, Check.corrector),
}

#: ``flag: (spec field, type)`` of the per-flag overrides.
OVERRIDES = {
    "model": ("model", str),
    "u": ("u", float),
    "side": ("side", int),
    "dimension": ("dimension", int),
    "seed": ("seed", int),
    "eta": ("eta", float),
    "L0": ("L0", int),
    "l0": ("l0", int),
    "r0": ("r0", int),
    "k_max": ("k_max", int),
    "R": ("R", int),
    "theta_iso": ("theta_iso", float),
    "level_s": ("level_s", int),
    "level_r": ("level_r", int),
    "budget": ("budget", int),
    "n": ("n", int),
    "T": ("T", float),
    "replicas": ("replicas", int),
    "n_max": ("n_max", int),
}


class _Parser(argparse.ArgumentParser):
    """An argument parser whose errors map to the usage exit code."""

    def error(self, message):
        raise UsageError(message)


def _grid_value(token: str) -> Any:
    try:
        return ujson.loads(token)
    except ValueError:
        return token


def parse_grid(entries: Sequence[str]) -> Dict[str, List[Any]]:
    """Parse ``key=v1,v2,...`` entries into a sweep grid."""
    grid: Dict[str, List[Any]] = {}
    for entry in entries or ():
        key, sep, values = entry.partition("=")
        if not sep or not key:
            raise UsageError("grid entries look like key=v1,v2, got {!r}".format(entry))
        grid[key.strip()] = [_grid_value(v.strip()) for v in values.split(",") if v.strip()]
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perco", description="Correlated percolation laboratory.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)

    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="experiment JSON file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0, help="raise the log level")
    common.add_argument("--workers", type=int, default=1, help="worker threads")
    common.add_argument("--wrap", action="store_true", default=None, help="sample on a torus")
    for flag, (_, kind) in OVERRIDES.items():
        common.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind, default=None)

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True
    commands.add_parser("sample", parents=[common], help="sample and save a configuration")
    commands.add_parser("classify", parents=[common], help="classify k-good boxes")
    commands.add_parser("renorm", parents=[common], help="check event H and build the fat set")
    commands.add_parser("iso", parents=[common], help="search the isoperimetric profile")
    commands.add_parser("walk", parents=[common], help="random walk and corrector diagnostics")
    run = commands.add_parser("run", parents=[common], help="run an experiment")
    run.add_argument("--checks", nargs="+", metavar="CHECK", choices=Check.values(), help="override the checks")
    sweep = commands.add_parser("sweep", parents=[common], help="run an experiment over a parameter grid")
    sweep.add_argument("--grid", action="append", metavar="KEY=V1,V2", required=True, help="a swept field")
    return parser


def load_spec(args: argparse.Namespace) -> ExperimentSpec:
    """The experiment of ``--config`` with the explicit flags applied."""
    spec = ExperimentSpec.from_file(args.config) if args.config else ExperimentSpec()
    overrides = {field: getattr(args, flag) for flag, (field, _) in OVERRIDES.items()}
    overrides["wrap"] = args.wrap
    overrides["out"] = args.out
    if args.command in SUBCOMMAND_CHECKS:
        overrides["checks"] = [c.value for c in SUBCOMMAND_CHECKS[args.command]]
    elif getattr(args, "checks", None):
        overrides["checks"] = args.checks
    return spec.with_overrides(**overrides)


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command line entry point, returning the exit code."""
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        spec = load_spec(args)
        with Laboratory(workers=args.workers) as lab:
            if args.command == "sweep":
                return _sweep(lab, spec, parse_grid(args.grid))
            report = lab.run_experiment(spec)
    except PercoException as exc:
        LOG.error("%s", exc)
        print(exc, file=sys.stderr)
        return exc.exit_code

    sys.stdout.write(report.to_text())
    return report.exit_code


def _sweep(lab: Laboratory, spec: ExperimentSpec, grid: Dict[str, List[Any]]) -> int:
    points = lab.sweep(spec, grid)
    code = 0
    for point in points:
        if point.failed:
            print("point {} {}: {}".format(point.index, point.parameters, point.error))
            code = max(code, point.error.exit_code)
        else:
            status = "pass" if point.report.passed else "fail"
            print("point {} {}: {}".format(point.index, point.parameters, status))
            code = max(code, point.report.exit_code)
    return code


if __name__ == "__main__":
    sys.exit(main())
