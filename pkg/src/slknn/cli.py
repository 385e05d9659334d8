"""Command-line entry point: ``slknn {generate,run,aggregate,preprocess}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from slknn.baselines import Strategy
from slknn.evaluation import read_runs_csv, write_runs_csv
from slknn.experiment import (
    SYNTHETIC,
    ExperimentPlan,
    check_stream_sharing,
    default_methods,
    run_plan,
    write_outputs,
    write_tables,
)
from slknn.streams import Scenario, ScenarioSpec, generate, load_sparse, reduce_dataset, save_dense
from slknn.types import ConfigError, LearnerConfig

log = logging.getLogger("slknn")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slknn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write one synthetic stream as delimited text")
    g.add_argument("--scenario", choices=SYNTHETIC, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--sigma", type=float, default=None)
    g.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("run", help="run the experiment matrix")
    r.add_argument("--config", type=Path, help="JSON file with plan and learner settings")
    r.add_argument("--scenario", action="append", help="synthetic scenario name or dataset path (repeatable)")
    r.add_argument("--method", action="append", help="method name, e.g. sl_plus_al or al@0.01 (repeatable)")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    r.add_argument("--train-fraction", type=float)
    r.add_argument("--n", type=int, help="length of synthetic streams")
    r.add_argument("--k", type=int)
    r.add_argument("--window", type=int, help="window capacity tau")
    r.add_argument("--age-weight", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--gt-weight", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--budget", type=float, action="append",
                   help="labeling budget of the al/al_sl baselines (repeatable)")
    r.add_argument("--strategy", choices=[s.value for s in Strategy])
    r.add_argument("--workers", type=int)
    r.add_argument("--out", type=Path, default=Path("results"))

    a = sub.add_parser("aggregate", help="re-aggregate an existing runs.csv")
    a.add_argument("runs_csv", type=Path)
    a.add_argument("--out", type=Path, help="output directory (default: next to runs.csv)")

    pp = sub.add_parser("preprocess", help="PCA-reduce a sparse dataset to dense features")
    pp.add_argument("path", type=Path)
    pp.add_argument("--dim", type=int, default=10)
    pp.add_argument("--train-fraction", type=float, default=0.1)
    pp.add_argument("--out", type=Path, required=True)
    return p


_PLAN_KEYS = {"scenarios", "methods", "runs", "base_seed", "train_fraction", "n", "sigma",
              "strategy", "pca_dim", "workers"}
_CONFIG_KEYS = {f.name for f in fields(LearnerConfig)}


def plan_from_args(args: argparse.Namespace) -> ExperimentPlan:
    """Defaults, then the JSON config file, then command-line flags."""
    plan_kw: dict = {}
    cfg_kw: dict = {}
    budgets = None
    if args.config:
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - _PLAN_KEYS - {"learner", "budgets"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        plan_kw.update({k: v for k, v in data.items() if k in _PLAN_KEYS})
        learner = data.get("learner", {})
        bad = set(learner) - _CONFIG_KEYS
        if bad:
            raise ConfigError(f"unknown learner keys: {sorted(bad)}")
        cfg_kw.update(learner)
        budgets = data.get("budgets")

    flag_map = {"scenario": "scenarios", "method": "methods", "runs": "runs", "seed": "base_seed",
                "train_fraction": "train_fraction", "n": "n", "strategy": "strategy", "workers": "workers"}
    for flag, key in flag_map.items():
        value = getattr(args, flag)
        if value is not None:
            plan_kw[key] = value
    for flag, key in {"k": "k", "window": "tau", "age_weight": "use_age_weight",
                      "gt_weight": "use_gt_weight"}.items():
        value = getattr(args, flag)
        if value is not None:
            cfg_kw[key] = value
    if args.budget:
        budgets = args.budget
    if budgets is not None and "methods" not in plan_kw:
        plan_kw["methods"] = list(default_methods(budgets))

    try:
        config = LearnerConfig(**cfg_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    plan = ExperimentPlan(config=config, output_dir=args.out, **plan_kw)
    plan.validate()
    return plan


def cmd_run(args) -> int:
    plan = plan_from_args(args)
    log.info("running %d scenario(s) x %d method(s) x %d run(s)",
             len(plan.scenarios), len(plan.methods), plan.runs)
    completed: list = []
    try:
        results = run_plan(plan, completed)
    except Exception:
        if completed:
            plan.output_dir.mkdir(parents=True, exist_ok=True)
            partial = plan.output_dir / "runs.partial.csv"
            with open(partial, "w", encoding="utf-8", newline="") as fh:
                write_runs_csv(completed, fh)
            log.error("run failed; %d finished runs kept in %s", len(completed), partial)
        raise
    check_stream_sharing(results)
    write_outputs(plan, results, plan.output_dir)
    print((plan.output_dir / "aggregate.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = ScenarioSpec(Scenario(args.scenario), n=args.n, seed=args.seed,
                        **({"sigma": args.sigma} if args.sigma is not None else {}))
    save_dense(generate(spec), args.out)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    with open(args.runs_csv, encoding="utf-8") as fh:
        results = read_runs_csv(fh)
    out = args.out or args.runs_csv.parent
    out.mkdir(parents=True, exist_ok=True)
    write_tables(results, out)
    print((out / "aggregate.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    ds = reduce_dataset(load_sparse(args.path), args.dim, args.train_fraction)
    save_dense(ds, args.out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "aggregate": cmd_aggregate, "preprocess": cmd_preprocess}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
