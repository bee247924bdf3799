"""Command-line interface.

Exit codes: 0 success, 2 config/data error, 3 refusal to overwrite a
non-empty output directory, 4 numeric divergence during training,
5 gradient-check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment, gradcheck
from .errors import (ConfigError, ContractError, DataError, DimensionError,
                     GeometryError, LabelError, ParseError, TrainingDiverged)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFUSAL = 3
EXIT_DIVERGED = 4
EXIT_GRADCHECK = 5

_USER_ERRORS = (ConfigError, ContractError, DataError, DimensionError,
                GeometryError, LabelError, ParseError)


class Refusal(Exception):
    pass


def _prepare_out(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise Refusal(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args) -> int:
    out = _prepare_out(args.out, args.force)
    resolved = experiment.load_config_file(args.config)
    print(experiment.run_synth(resolved, out))
    return EXIT_OK


def _cmd_train(args) -> int:
    out = _prepare_out(args.out, args.force)
    resolved = experiment.load_config_file(args.config)
    if args.baseline and resolved["generator"]["variant"] != "naive_max":
        print("warning: --baseline has no conditioning; generator and "
              "embedding settings are ignored", file=sys.stderr)
    print(experiment.run_train(resolved, out, baseline=args.baseline))
    return EXIT_OK


def _cmd_eval(args) -> int:
    out = _prepare_out(args.out, args.force)
    print(experiment.run_eval(args.checkpoint, args.data, out,
                              window_length=args.window, stride=args.stride))
    return EXIT_OK


def _cmd_compare(args) -> int:
    out = _prepare_out(args.out, args.force)
    resolved = experiment.load_config_file(args.config)
    print(experiment.run_compare(resolved, args.seeds, out))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(seed=args.seed)
    width = max(len(r.name) for r in results)
    failed = []
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  max rel err {r.max_rel_err:.3e}  "
              f"(tol {r.tolerance:.0e})  {status}")
        if not r.passed:
            failed.append(r.name)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densehar",
        description="Dense multi-label activity recognition with chained 1-D UNets")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite non-empty output")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train the chain (or the multi-head baseline)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true",
                   help="train the unconditioned multi-head baseline")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory or data.csv path")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--stride", type=int, default=32)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("compare", help="seeded chain-vs-baseline comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=5, metavar="K")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Refusal as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())
