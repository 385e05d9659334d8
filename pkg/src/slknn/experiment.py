"""Experiment matrix: every method on identical seeded streams, then aggregation."""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slknn.baselines import BudgetedALLearner, BudgetManager, Strategy, SupervisedLearner
from slknn.evaluation import (
    RunResult,
    aggregate,
    format_table,
    run_prequential,
    write_aggregate_csv,
    write_runs_csv,
)
from slknn.learner import BaseLearner, HybridLearner
from slknn.streams import Dataset, Scenario, ScenarioSpec, generate, load_dense, load_sparse, reduce_dataset, split
from slknn.types import ConfigError, LearnerConfig, Mode, validate_config

SYNTHETIC = tuple(s.value for s in Scenario)
HYBRID_METHODS = ("sl_only", "sl_plus_al", "sl_plus_batch")
DEFAULT_BUDGETS = (0.01, 0.05)


def default_methods(budgets=DEFAULT_BUDGETS) -> tuple[str, ...]:
    return (
        "supervised",
        *HYBRID_METHODS,
        *(f"al@{b:g}" for b in budgets),
        *(f"al_sl@{b:g}" for b in budgets),
    )


def make_learner(
    method: str,
    config: LearnerConfig,
    seed: int = 0,
    strategy: Strategy | str = Strategy.VARIABLE_UNCERTAINTY,
) -> BaseLearner:
    """Build a fresh learner from a method name such as ``sl_plus_al`` or ``al_sl@0.05``."""
    if method == "supervised":
        return SupervisedLearner(config)
    if method in HYBRID_METHODS:
        return HybridLearner(config.replace(mode=Mode(method)))
    name, _, budget = method.partition("@")
    if name in ("al", "al_sl") and budget:
        try:
            b = float(budget)
        except ValueError:
            raise ConfigError(f"bad budget in method {method!r}") from None
        # per-method generator so methods never share random draws
        rng = np.random.default_rng([seed, zlib.crc32(method.encode())])
        mgr = BudgetManager(b, strategy, rng=rng)
        return BudgetedALLearner(config, mgr, self_label=name == "al_sl")
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class ExperimentPlan:
    scenarios: list[str] = field(default_factory=lambda: list(SYNTHETIC))
    methods: list[str] = field(default_factory=lambda: list(default_methods()))
    runs: int = 100
    base_seed: int = 0
    config: LearnerConfig = field(default_factory=LearnerConfig)
    train_fraction: float = 0.1
    n: int = 2000
    sigma: float = 0.5
    strategy: str = Strategy.VARIABLE_UNCERTAINTY.value
    pca_dim: int = 10
    workers: int = 1
    output_dir: Path | None = None

    def validate(self) -> None:
        validate_config(self.config)
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not self.scenarios or not self.methods:
            raise ConfigError("plan needs at least one scenario and one method")
        Strategy(self.strategy)
        for m in self.methods:
            make_learner(m, self.config)
        for s in self.scenarios:
            if s not in SYNTHETIC and not Path(s).is_file():
                raise ConfigError(f"scenario {s!r} is neither a synthetic scenario nor a readable file")

    def metadata(self) -> dict:
        return {
            "methods": list(self.methods),
            "scenarios": list(self.scenarios),
            "runs": self.runs,
            "base_seed": self.base_seed,
            "seeds": "base_seed + run index, shared by all methods",
            "stream_length": self.n,
            "sigma": self.sigma,
            "train_fraction": self.train_fraction,
            "accuracy_segment": "deployment segment only",
            "labels_requested": "deployment-phase oracle queries only",
            "std_convention": "population (divisor n)",
            "quantile_convention": "linear interpolation between order statistics",
            "al_strategy": self.strategy,
            "korycki_al_sl": "shared k-NN certainty and calibrated theta_sl",
            "pca_dim_for_files": self.pca_dim,
            "config": self.config.to_dict(),
        }


def load_stream(scenario: str, seed: int, plan: ExperimentPlan) -> Dataset:
    if scenario in SYNTHETIC:
        return generate(ScenarioSpec(Scenario(scenario), n=plan.n, sigma=plan.sigma, seed=seed))
    path = Path(scenario)
    if path.suffix in (".csv", ".txt") and _looks_dense(path):
        return load_dense(path)
    ds = load_sparse(path)
    return reduce_dataset(ds, plan.pca_dim, plan.train_fraction)


def _looks_dense(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return ":" not in first


def run_cell(args) -> list[RunResult]:
    """All methods on one (scenario, seed) stream."""
    scenario, seed, plan, dataset = args
    if dataset is None:
        dataset = load_stream(scenario, seed, plan)
    digest = dataset.digest()
    s_train, s_test, _ = split(dataset, plan.train_fraction)
    out = []
    for method in plan.methods:
        _, _, oracle = split(dataset, plan.train_fraction)
        learner = make_learner(method, plan.config, seed=seed, strategy=plan.strategy)
        result = run_prequential(learner, s_train, s_test, oracle, method=method,
                                 scenario=_scenario_name(scenario), seed=seed)
        if oracle.queries != result.labels_requested:
            raise RuntimeError(f"{method}: oracle saw {oracle.queries} queries, learner counted "
                               f"{result.labels_requested}")
        result.stream_hash = digest
        out.append(result)
    return out


def _scenario_name(scenario: str) -> str:
    return scenario if scenario in SYNTHETIC else Path(scenario).stem


def run_plan(plan: ExperimentPlan, completed: list[RunResult] | None = None) -> list[RunResult]:
    """Execute the plan and return results sorted by (scenario, method, seed).

    A file-backed scenario is loaded once and shared by all of its runs.
    Finished cells are also appended to ``completed`` as they arrive, so a
    caller can keep partial results when a later cell fails.
    """
    plan.validate()
    cells = []
    for scenario in plan.scenarios:
        shared = None if scenario in SYNTHETIC else load_stream(scenario, 0, plan)
        cells.extend((scenario, plan.base_seed + i, plan, shared) for i in range(plan.runs))
    results: list[RunResult] = [] if completed is None else completed
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            for chunk in pool.map(run_cell, cells, chunksize=max(1, len(cells) // (4 * plan.workers))):
                results.extend(chunk)
    else:
        for cell in cells:
            results.extend(run_cell(cell))
    order = {s: i for i, s in enumerate(_scenario_name(s) for s in plan.scenarios)}
    return sorted(results, key=lambda r: (order[r.scenario], r.method, r.seed))


def check_stream_sharing(results: list[RunResult]) -> None:
    """Every method of one (scenario, seed) must have consumed the same stream."""
    seen: dict[tuple[str, int], str] = {}
    for r in results:
        key = (r.scenario, r.seed)
        if seen.setdefault(key, r.stream_hash) != r.stream_hash:
            raise RuntimeError(f"stream hash mismatch for scenario {r.scenario!r}, seed {r.seed}")


def write_outputs(plan: ExperimentPlan, results: list[RunResult], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "runs.csv", "w", encoding="utf-8", newline="") as fh:
        write_runs_csv(results, fh)
    with open(out_dir / "streams.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario,seed,sha256\n")
        for key in sorted({(r.scenario, r.seed, r.stream_hash) for r in results}):
            fh.write(",".join(map(str, key)) + "\n")
    write_tables(results, out_dir)
    with open(out_dir / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(plan.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_tables(results: list[RunResult], out_dir: Path) -> None:
    by_scenario: dict[str, list[RunResult]] = {}
    for r in results:
        by_scenario.setdefault(r.scenario, []).append(r)
    tables = {scenario: aggregate(group) for scenario, group in by_scenario.items()}
    with open(out_dir / "aggregate.csv", "w", encoding="utf-8", newline="") as fh:
        write_aggregate_csv(tables, fh)
    with open(out_dir / "aggregate.md", "w", encoding="utf-8") as fh:
        fh.write("\n".join(format_table(scenario, rows) for scenario, rows in tables.items()))
