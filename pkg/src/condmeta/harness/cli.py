"""Command line entry point (``condmeta``).

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from typing import List, Optional

from ..core import DimensionError, EmptyDataError, NumericInputError, ParameterError
from ..environments import (
    CircleEnvSpec,
    ClusterEnvSpec,
    SchemaError,
    gen_circle,
    gen_clusters,
    write_csv_env,
)
from ..features import SideInfoError
from ..oracle import cluster_gap_lower_bound, cluster_uncond_variance, gap_report
from .config import ConfigError, load_config
from .experiment import build_feature_map, run_experiment
from .outputs import OutputError, emit_outputs

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
DATA_ERRORS = (SchemaError, DimensionError, EmptyDataError, NumericInputError, SideInfoError,
               ParameterError, OSError)

log = logging.getLogger("condmeta")


def _synthetic_tasks(args):
    if args.env == "clusters":
        spec = ClusterEnvSpec.preset(
            args.variant, seed=args.seed, d=args.d, n_tot=args.n, T_tot=args.tasks
        )
        return spec, gen_clusters(spec)
    spec = CircleEnvSpec(r=args.r, d=args.d, n_tot=args.n, T_tot=args.tasks, seed=args.seed)
    return spec, gen_circle(spec)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(args.seeds))
    try:
        paths = emit_outputs(run_experiment(cfg))
    except OutputError as exc:
        raise ConfigError(str(exc)) from exc
    for method, err in sorted(_final(paths["curves_mean"]).items()):
        print(f"{method:>20s}  final test error {err:.4f}")
    print(f"wrote {paths['curves'].parent}")
    return EXIT_OK


def _final(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["method"]] = float(row["test_error"])
    return out


def cmd_gap(args) -> int:
    spec, tasks = _synthetic_tasks(args)
    report = {}
    feature = args.feature or ("mean_inputs" if args.env == "clusters" else "circle")
    fmap = build_feature_map(_GapCfg(args), feature, tasks, args.seed)
    report["feature_map"] = feature
    report.update(gap_report(tasks, fmap).to_row())
    if args.env == "clusters":
        n_side = tasks[0].train.n
        report["closed_form_var_uncond"] = cluster_uncond_variance(spec)
        report["gap_lower_bound"] = cluster_gap_lower_bound(spec, n_side)
        report["gap_lower_bound_corrected"] = cluster_gap_lower_bound(spec, n_side, corrected=True)
    else:
        report["closed_form_gap"] = spec.r**2
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


class _GapCfg:
    def __init__(self, args):
        self.rff_k = args.rff_k
        self.rff_sigma = args.rff_sigma


def cmd_gen(args) -> int:
    _, tasks = _synthetic_tasks(args)
    write_csv_env(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _add_env_args(p):
    p.add_argument("--env", choices=("clusters", "circle"), default="clusters")
    p.add_argument("--variant", choices=("one", "two_mean4", "two_mean0"), default="one")
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--n", type=int, default=20, help="datapoints per task")
    p.add_argument("--tasks", type=int, default=480)
    p.add_argument("--r", type=float, default=8.0, help="circle radius")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condmeta", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write its outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override the config's output directory")
    p.add_argument("--seeds", type=int, nargs="+", help="override the config's seeds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gap", help="oracle variance/gap diagnostics for a synthetic environment")
    _add_env_args(p)
    p.add_argument("--feature", choices=("mean_inputs", "xy_outer", "circle", "rff"))
    p.add_argument("--rff-k", type=int, default=50)
    p.add_argument("--rff-sigma", type=float, default=10.0)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("gen", help="write a synthetic environment to CSV")
    _add_env_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate-config", help="parse a config and echo the resolved values")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
