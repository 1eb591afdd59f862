"""Command-line entry point: ``fairrobust {theory,sweep,train,attack-eval}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 a theorem
check failed, 3 runtime failure (I/O, corrupt files, training errors).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import DataFormatError
from .mixture_theory import RegimeError
from .models import CheckpointError
from .population import GaussianMixtureSpec
from .runner import OUTPUT_DIR_ENV, ConfigError, cmd_attack_eval, cmd_sweep, cmd_theory, \
    cmd_train, load_config

EXIT_OK, EXIT_VALIDATION, EXIT_THEOREM, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("fairrobust")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairrobust")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("theory", help="check the threshold orderings for one mixture")
    t.add_argument("--mu-minus", type=float, default=-1.0)
    t.add_argument("--mu-plus", type=float, default=1.0)
    t.add_argument("--k", type=float, default=5.0, help="std-dev ratio of class +1 to class -1")
    t.add_argument("--epsilon", type=float, default=0.1)
    t.add_argument("--lambdas", type=_float_list,
                   default=[round(0.2 * i, 10) for i in range(11)],
                   help="comma-separated penalty weights for the lambda path")
    t.add_argument("--curve-points", type=int, default=401)
    t.add_argument("--out", help="output directory (default: $%s or ./theory)" % OUTPUT_DIR_ENV)

    for name, text in (("sweep", "train and evaluate every sweep point"),
                       ("train", "train the first sweep point and save a checkpoint"),
                       ("attack-eval", "evaluate a checkpoint under attack")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (dotted key, JSON value)")
        if name == "sweep":
            s.add_argument("--workers", type=int)
        if name in ("train", "attack-eval"):
            s.add_argument("--checkpoint", help="checkpoint path (default: <output_dir>/model.frck)")
        if name == "attack-eval":
            s.add_argument("--split", choices=("train", "test"), default="test")
    return p


def _run(args) -> int:
    if args.command == "theory":
        spec = GaussianMixtureSpec(args.mu_minus, args.mu_plus, args.k)
        out = Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or "theory")
        report = cmd_theory(spec, args.epsilon, args.lambdas, out, args.curve_points)
        status = report.to_dict()["status"]
        print(f"theorem checks: {status} "
              f"(B_K={report.bounds.b_k:.6g}, thresholds: "
              + ", ".join(f"{k}={v:.6f}" for k, v in report.thresholds.items()) + ")")
        for name, clamped in report.clamped.items():
            if clamped:
                print(f"note: {name} threshold clamped to the class means")
        for r in report.failures():
            print(f"FAILED {r.name}: {r.lhs!r} > {r.rhs!r}")
        print(f"wrote {out}")
        return EXIT_OK if report.all_passed else EXIT_THEOREM

    overrides = list(args.overrides)
    if getattr(args, "workers", None) is not None:
        overrides.append(f"workers={args.workers}")
    cfg = load_config(args.config, overrides)
    if args.command == "sweep":
        path = cmd_sweep(cfg, log=log.info)
    elif args.command == "train":
        path = cmd_train(cfg, args.checkpoint)
    else:
        ckpt = args.checkpoint or cfg.output_dir / "model.frck"
        path = cmd_attack_eval(cfg, ckpt, args.split)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with np.errstate(all="ignore"):
            return _run(args)
    except (ConfigError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CheckpointError, DataFormatError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
