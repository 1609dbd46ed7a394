"""Command line entry point.

Exit codes: 0 when every gate passes, 1 on a gate failure, 2 on a
configuration or convergence error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import MultiscaleError
from ..problems import PRESETS, list_problems
from .config import ExperimentSpec, load_preset, load_spec, preset_names
from .experiments import run

log = logging.getLogger("uams")

_SUBCOMMANDS = {
    "solve": "solve",
    "convergence": "convergence",
    "drift": "drift",
    "compare-averaged": "compare-averaged",
    "recover": "recover-window",
    "diagnostics": "diagnostics",
    "timing": "timing",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uams", description="Run multiscale integration experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run a {name} experiment")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON experiment config")
        src.add_argument("--preset", help="shipped experiment preset (see list-problems)")
        sp.add_argument("--out", help="output directory for CSV and summary files")
        sp.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        if name == "solve":
            sp.add_argument("--problem", help="problem name when no config is given")
            sp.add_argument("--dt", type=float, default=0.1)
            sp.add_argument("--T", type=float, default=None, help="final time")
            sp.add_argument("--method", choices=("ua", "direct", "averaged"), default="ua")
    sub.add_parser("list-problems", help="list problems and experiment presets")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _spec(args, kind: str) -> ExperimentSpec:
    if args.config:
        spec = load_spec(args.config)
    elif args.preset:
        spec = load_preset(args.preset)
    elif kind == "solve" and args.problem:
        T = args.T
        if T is None:
            T = PRESETS[args.problem]().T_final if args.problem in PRESETS else 1.0
        spec = ExperimentSpec(kind="solve", problem=args.problem, dt=[args.dt], T_final=T,
                              options={"method": args.method}, name=f"{args.problem}")
    else:
        raise MultiscaleError("give --config or --preset" + (" or --problem" if kind == "solve" else ""))
    if spec.kind != kind:
        raise MultiscaleError(f"config kind {spec.kind!r} does not match subcommand {kind!r}")
    if args.out:
        spec.out = args.out
    return spec


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list-problems":
        print("problems:")
        for name in list_problems():
            print(f"  {name}")
        print("experiment presets:")
        for name in preset_names():
            print(f"  {name}")
        return 0
    try:
        spec = _spec(args, _SUBCOMMANDS[args.command])
        summary = run(spec, workers=args.workers)
    except (MultiscaleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"name": summary.name, "passed": summary.passed, "verdicts": summary.verdicts,
                      "metrics": summary.metrics, "notes": summary.notes, "files": summary.files},
                     indent=2, default=str))
    return 0 if summary.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
