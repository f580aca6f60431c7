"""Command-line benchmark driver.

``gpcommittee-bench run`` executes one experiment; ``gpcommittee-bench sweep``
repeats it over increasing training sizes with a fixed per-expert subset size
and reports consistency trends. Results land in the output directory as
results.csv, results.json and partition.json (plus sweep.json for sweeps).
"""

from __future__ import annotations

import argparse
import json
import re
import sys

from .bench import (ExperimentConfig, METHOD_CHOICES, PARTITION_CHOICES,
                    consistency_sweep, run_experiment)


def _parse_dataset(args) -> dict:
    if args.csv:
        target: int | str = args.target_col
        try:
            target = int(target)
        except (TypeError, ValueError):
            pass
        return {"dataset": "csv", "csv_path": args.csv, "target_column": target,
                "test_fraction": args.test_fraction}
    m = re.fullmatch(r"toy(\d+)", args.dataset or "")
    if not m:
        raise SystemExit("--dataset must look like toy1000, or use --csv PATH")
    return {"dataset": "toy", "n": int(m.group(1)), "n_test": args.n_test}


def _methods(raw: str) -> tuple[str, ...]:
    methods = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    bad = [m for m in methods if m not in METHOD_CHOICES]
    if bad:
        raise SystemExit(f"unknown methods {bad}; choose from {METHOD_CHOICES}")
    return methods


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default=None, help="toy dataset spec, e.g. toy1000")
    p.add_argument("--csv", default=None, help="CSV dataset path")
    p.add_argument("--target-col", default="-1",
                   help="target column index or header name (CSV only)")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--n-test", type=int, default=None, help="toy test size")
    p.add_argument("--partition", choices=PARTITION_CHOICES, default="disjoint")
    p.add_argument("--experts", type=int, default=None, metavar="M")
    p.add_argument("--subset-size", type=int, default=None, metavar="M0")
    p.add_argument("--methods", default="poe,gpoe,bcm,rbcm,grbcm")
    p.add_argument("--gpoe-beta", choices=("uniform", "entropy"), default="uniform")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-evals", type=int, default=500)
    p.add_argument("--opt-method", choices=("cg", "lbfgs"), default="cg")
    p.add_argument("--no-rebalance", action="store_true",
                   help="keep raw k-means cluster sizes")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--normalized-metrics", action="store_true",
                   help="score on the normalized scale instead of original units")
    p.add_argument("--out", default=None, help="output directory")


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        partition_kind=args.partition,
        M=args.experts,
        m0=args.subset_size,
        methods=_methods(args.methods),
        gpoe_mode=args.gpoe_beta,
        max_evals=args.max_evals,
        opt_method=args.opt_method,
        seed=args.seed,
        repetitions=args.reps,
        rebalance=not args.no_rebalance,
        workers=args.workers,
        normalized_metrics=args.normalized_metrics,
        out_dir=args.out,
        **_parse_dataset(args),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gpcommittee-bench",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment")
    _add_common(run_p)
    sweep_p = sub.add_parser("sweep", help="consistency sweep over training sizes")
    _add_common(sweep_p)
    sweep_p.add_argument("--n-list", required=True,
                         help="comma-separated increasing training sizes")
    args = parser.parse_args(argv)

    config = _config_from_args(args)
    if args.command == "run":
        result = run_experiment(config)
        for rec in result.records:
            if rec.error:
                print(f"{rec.method:14s} rep {rec.repetition}: FAILED {rec.error}")
            else:
                print(f"{rec.method:14s} rep {rec.repetition}: "
                      f"smse={rec.smse:.4f} msll={rec.msll:+.4f} "
                      f"train={rec.train_time_seconds:.2f}s "
                      f"predict={rec.predict_time_seconds:.2f}s")
        return 0

    n_list = [int(tok) for tok in args.n_list.split(",") if tok.strip()]
    if config.m0 is None:
        raise SystemExit("sweep requires --subset-size")
    report = consistency_sweep(config, n_list, out_dir=args.out)
    print(json.dumps(report["flags"], indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
