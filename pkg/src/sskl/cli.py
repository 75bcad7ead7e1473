"""Command-line entry point: ``sskl run``, ``sskl gradcheck`` and ``sskl split``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .data import make_split
from .errors import ConfigError, SsklError
from .experiment import METHODS, load_dataset, parse_config, run_experiment
from .trainer import grad_check, random_instance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

logger = logging.getLogger("sskl")


def _methods(values):
    if not values:
        return None
    out = []
    for v in values:
        out.extend(m.strip() for m in v.split(",") if m.strip())
    return tuple(out)


def _load(args):
    config = parse_config(args.config)
    overrides = {}
    if getattr(args, "method", None):
        overrides["methods"] = _methods(args.method)
    for flag, key in (("n", "n_labeled"), ("trials", "trials"), ("seed", "base_seed"), ("out", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return replace(config, **overrides) if overrides else config


def cmd_run(args) -> int:
    config = _load(args)
    result = run_experiment(config, out_dir=config.output_dir)
    print(result.table(), end="")
    failed = [r for r in result.records if r["status"] != "ok"]
    if failed:
        print(f"{len(failed)} of {len(result.records)} cells failed; see {Path(config.output_dir) / 'records.csv'}",
              file=sys.stderr)
    print(f"wrote {config.output_dir}/records.csv, aggregate.csv, table.txt")
    return EXIT_RUNTIME if len(failed) == len(result.records) else EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    bad = 0
    for i in range(args.instances):
        fn, flat = random_instance(rng, n=args.n, m=args.m, d=args.d, hidden=tuple(args.hidden),
                                   kernel=args.kernel, alpha=args.alpha)
        report = grad_check(fn, flat, h=args.h, tol=args.tol)
        worst = max(worst, report.max_rel_err)
        if not report.ok:
            bad += 1
            print(f"instance {i}: {report.summary()} failing coords {report.failures[:10]}")
    print(f"{args.instances} instances, worst rel err {worst:.3e}, {bad} failing")
    return EXIT_OK if bad == 0 else EXIT_RUNTIME


def cmd_split(args) -> int:
    config = _load(args)
    dataset = load_dataset(config)
    out = Path(args.export)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(config.trials):
        view = make_split(dataset, config.n_labeled, config.base_seed + t, config.test_size)
        path = out / f"split_trial{t:02d}.txt"
        path.write_text(view.manifest())
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sskl", description="Semi-supervised deep kernel learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials and write result tables")
    run.add_argument("--config", required=True)
    run.add_argument("--method", action="append", help=f"repeatable or comma-separated; one of {', '.join(METHODS)}")
    run.add_argument("--n", type=int, help="labeled examples per trial")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, help="base seed; trial t splits with seed+t")
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=cmd_run)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the training objective")
    gc.add_argument("--instances", type=int, default=10)
    gc.add_argument("--n", type=int, default=4)
    gc.add_argument("--m", type=int, default=3)
    gc.add_argument("--d", type=int, default=2)
    gc.add_argument("--hidden", type=int, nargs="*", default=[6, 4])
    gc.add_argument("--kernel", choices=(kernels.RBF, kernels.POLYNOMIAL, kernels.SUM), default=kernels.RBF)
    gc.add_argument("--alpha", type=float, default=1.0)
    gc.add_argument("--h", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("split", help="export per-trial split manifests")
    sp.add_argument("--config", required=True)
    sp.add_argument("--export", required=True, help="directory for manifest files")
    sp.add_argument("--n", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_split)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SsklError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
