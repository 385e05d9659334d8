"""Prequential (interleaved test-then-train) evaluation and result aggregation."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from slknn.learner import BaseLearner, LabelOracle
from slknn.types import LabeledSample, LabelOrigin, LearnerConfig, Prediction, Sample, WindowEntry

__all__ = [
    "AggregateRow",
    "RunResult",
    "aggregate",
    "brute_force_reference",
    "format_table",
    "read_runs_csv",
    "run_prequential",
    "write_aggregate_csv",
    "write_runs_csv",
]


@dataclass
class RunResult:
    method: str
    scenario: str
    seed: int
    itte_trace: np.ndarray
    accuracy: float
    labels_requested: int
    config_snapshot: LearnerConfig | None = None
    train_itte: float | None = None
    stream_hash: str = ""
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AggregateRow:
    method: str
    mean_accuracy: float
    std_accuracy: float
    mean_labels_requested: float
    runs: int


def run_prequential(
    learner: BaseLearner,
    s_train: Sequence[LabeledSample],
    s_test: Sequence[Sample],
    oracle: LabelOracle,
    truth=None,
    method: str = "",
    scenario: str = "",
    seed: int = 0,
) -> RunResult:
    """Drive a fresh learner through the training prefix and the deployment segment.

    Every step is scored on the prediction made before the learner updates.
    Accuracy is computed over ``s_test`` only. ``truth`` maps arrival index to
    the true label for scoring; it defaults to ``oracle.peek`` so scoring never
    counts as a label request.
    """
    if len(learner.window):
        raise ValueError("run_prequential needs a fresh learner")
    truth = truth or oracle.peek
    train_errors = 0
    for ls in s_train:
        outcome = learner.train_step(ls.sample, ls.label)
        train_errors += outcome.prediction is None or outcome.prediction.label != ls.label
    learner.finalize_training()

    errors = np.empty(len(s_test), dtype=np.float64)
    for i, x in enumerate(s_test):
        outcome = learner.test_step(x, oracle)
        errors[i] = outcome.prediction.label != truth(x.t)
    if errors.size == 0:
        raise ValueError("deployment segment is empty")
    trace = np.cumsum(errors) / np.arange(1, errors.size + 1)
    return RunResult(
        method=method,
        scenario=scenario,
        seed=seed,
        itte_trace=trace,
        accuracy=float(1.0 - trace[-1]),
        labels_requested=int(learner.labels_requested),
        config_snapshot=learner.config,
        train_itte=train_errors / len(s_train) if len(s_train) else None,
    )


def aggregate(results: Iterable[RunResult]) -> list[AggregateRow]:
    """Per-method mean and population std of accuracy, mean labels requested.

    Rows come out sorted by method name; runs are folded in (method, seed)
    order so the output does not depend on the input order.
    """
    groups: dict[str, list[RunResult]] = defaultdict(list)
    for r in results:
        groups[r.method].append(r)
    if not groups:
        raise ValueError("no results to aggregate")
    rows = []
    for method in sorted(groups):
        runs = sorted(groups[method], key=lambda r: r.seed)
        acc = np.array([r.accuracy for r in runs])
        labels = np.array([r.labels_requested for r in runs], dtype=np.float64)
        rows.append(
            AggregateRow(
                method=method,
                mean_accuracy=float(acc.mean()),
                std_accuracy=float(acc.std()),
                mean_labels_requested=float(labels.mean()),
                runs=len(runs),
            )
        )
    return rows


def brute_force_reference(
    entries: Sequence[WindowEntry], x: Sample, config: LearnerConfig, eps: float = 1e-12
) -> Prediction:
    """Direct, unoptimised evaluation of the weighted k-NN rule; a test oracle.

    ``entries`` are the window contents in any order.
    """
    by_age = sorted(entries, key=lambda e: e.inserted_at)
    n = len(by_age)
    age = {}
    for rank, e in enumerate(by_age):
        if not config.use_age_weight or n == 1:
            age[e.inserted_at] = 1.0
        else:
            age[e.inserted_at] = config.age_weight_oldest + (1.0 - config.age_weight_oldest) * rank / (n - 1)

    def origin_w(e: WindowEntry) -> float:
        if not config.use_gt_weight:
            return 1.0
        return config.gt_weight if e.origin is LabelOrigin.GROUND_TRUTH else config.sl_weight

    def dist(e: WindowEntry) -> float:
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(e.sample.features, x.features)))

    ranked = sorted(by_age, key=lambda e: (dist(e), -e.inserted_at))
    hood = ranked[: config.k]
    m = len(hood)
    norm_age = sum(sorted(age.values(), reverse=True)[:m]) / m
    norm_gt = sum(sorted((origin_w(e) for e in by_age), reverse=True)[:m]) / m

    scores: dict[int, float] = {}
    inv_total = 0.0
    for e in hood:
        inv = 1.0 / max(dist(e), eps)
        inv_total += inv
        scores[e.label] = scores.get(e.label, 0.0) + origin_w(e) * age[e.inserted_at] * inv
    best = max(scores.values())
    label = min(c for c, s in scores.items() if s == best)
    certainty = scores[label] / (norm_gt * norm_age * inv_total)
    return Prediction(label, min(1.0, max(0.0, certainty)))


# -- export ---------------------------------------------------------------

RUN_FIELDS = ["method", "scenario", "seed", "accuracy", "labels_requested"]


def write_runs_csv(results: Iterable[RunResult], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RUN_FIELDS)
    for r in results:
        w.writerow([r.method, r.scenario, r.seed, repr(r.accuracy), r.labels_requested])


def read_runs_csv(fh) -> list[RunResult]:
    out = []
    for row in csv.DictReader(fh):
        out.append(
            RunResult(
                method=row["method"],
                scenario=row["scenario"],
                seed=int(row["seed"]),
                itte_trace=np.empty(0),
                accuracy=float(row["accuracy"]),
                labels_requested=int(row["labels_requested"]),
            )
        )
    return out


def write_aggregate_csv(tables: dict[str, Sequence[AggregateRow]], fh) -> None:
    """One row per (scenario, method); ``tables`` maps scenario to its rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["scenario", "method", "mean_accuracy", "std_accuracy", "mean_labels_requested", "runs"])
    for scenario, rows in tables.items():
        for r in rows:
            w.writerow([scenario, r.method, f"{r.mean_accuracy:.6f}", f"{r.std_accuracy:.6f}",
                        f"{r.mean_labels_requested:.3f}", r.runs])


def format_table(scenario: str, rows: Sequence[AggregateRow]) -> str:
    """Markdown table: method | accuracy (mean ± std) | mean requested labels."""
    buf = io.StringIO()
    buf.write(f"### {scenario}\n\n")
    header = ("method", "accuracy", "requested labels")
    body = [(r.method, f"{r.mean_accuracy:.3f} ± {r.std_accuracy:.3f}", f"{r.mean_labels_requested:.1f}")
            for r in rows]
    widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
    line = lambda cells: "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |\n"  # noqa: E731
    buf.write(line(header))
    buf.write("|" + "|".join("-" * (w + 2) for w in widths) + "|\n")
    for cells in body:
        buf.write(line(cells))
    return buf.getvalue()
