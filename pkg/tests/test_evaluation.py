import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slknn.evaluation import (
    RunResult,
    aggregate,
    format_table,
    read_runs_csv,
    run_prequential,
    write_aggregate_csv,
    write_runs_csv,
)
from slknn.experiment import ExperimentPlan, check_stream_sharing, make_learner, run_plan
from slknn.learner import BaseLearner, StepOutcome, Update
from slknn.streams import Scenario, ScenarioSpec, generate, split
from slknn.types import ConfigError, LearnerConfig, Prediction


class FixedLearner(BaseLearner):
    """Predicts via ``rule(t)`` and never learns or queries."""

    needs_threshold = False

    def __init__(self, rule):
        super().__init__()
        self.rule = rule

    def test_step(self, x, oracle):
        self._require_deployed()
        return StepOutcome(Prediction(self.rule(x.t), 1.0), Update.NONE)


def stream(n=200, seed=0):
    ds = generate(ScenarioSpec(Scenario.PARTLY_OVERLAPPING, n=n, seed=seed))
    return ds, split(ds, 0.1)


def test_perfect_learner_scores_one():
    ds, (s_train, s_test, oracle) = stream()
    r = run_prequential(FixedLearner(lambda t: int(ds.y[t])), s_train, s_test, oracle)
    assert r.accuracy == 1.0 and np.all(r.itte_trace == 0.0)
    assert r.labels_requested == 0 and oracle.queries == 0


def test_constant_learner_scores_class_share():
    ds, (s_train, s_test, oracle) = stream()
    r = run_prequential(FixedLearner(lambda t: 0), s_train, s_test, oracle)
    assert r.accuracy == pytest.approx(np.mean(ds.y[20:] == 0))
    assert r.itte_trace.shape == (180,)


def test_itte_trace_is_running_error():
    ds, (s_train, s_test, oracle) = stream(n=50)
    wrong = {t for t in range(5, 50) if t % 3 == 0}
    r = run_prequential(FixedLearner(lambda t: 1 - int(ds.y[t]) if t in wrong else int(ds.y[t])),
                        s_train, s_test, oracle)
    errs = np.array([t in wrong for t in range(5, 50)], dtype=float)
    np.testing.assert_allclose(r.itte_trace, np.cumsum(errs) / np.arange(1, 46))


def test_prequential_rejects_used_learner():
    _, (s_train, s_test, oracle) = stream()
    learner = make_learner("supervised", LearnerConfig())
    learner.train_step(s_train[0].sample, s_train[0].label)
    with pytest.raises(ValueError, match="fresh"):
        run_prequential(learner, s_train, s_test, oracle)


def result(method, seed, acc, labels=0, scenario="s"):
    return RunResult(method, scenario, seed, np.empty(0), acc, labels)


def test_aggregate_mean_and_population_std():
    (row,) = aggregate([result("m", 0, 0.7, 10), result("m", 1, 0.9, 20)])
    assert row.mean_accuracy == pytest.approx(0.8)
    assert row.std_accuracy == pytest.approx(0.1)
    assert row.mean_labels_requested == 15 and row.runs == 2


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=50, deadline=None)
@given(accs=st.lists(st.floats(0, 1), min_size=1, max_size=20), data=st.data())
def test_aggregate_is_order_invariant(accs, data):
    results = [result("ab"[i % 2], i, a, i) for i, a in enumerate(accs)]
    shuffled = data.draw(st.permutations(results))
    assert aggregate(results) == aggregate(shuffled)


def test_runs_csv_round_trip():
    rs = [result("sl_only", 3, 0.123456789, 4), result("al@0.01", 1, 2 / 3, 17)]
    buf = io.StringIO()
    write_runs_csv(rs, buf)
    back = read_runs_csv(io.StringIO(buf.getvalue()))
    assert [(r.method, r.seed, r.accuracy, r.labels_requested) for r in back] == \
        [(r.method, r.seed, r.accuracy, r.labels_requested) for r in rs]


def test_aggregate_outputs():
    rows = aggregate([result("a", 0, 0.5), result("b", 0, 1.0)])
    buf = io.StringIO()
    write_aggregate_csv({"x": rows, "y": rows}, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("scenario,method") and len(lines) == 5
    table = format_table("x", rows)
    assert "| a " in table and "0.500 ± 0.000" in table


def test_make_learner_rejects_unknown_methods():
    for bad in ["magic", "al@", "al@x", "al_sl"]:
        with pytest.raises(ConfigError):
            make_learner(bad, LearnerConfig())


def test_methods_share_each_stream():
    plan = ExperimentPlan(scenarios=["no_overlap", "crossing_same_time"], methods=["supervised", "sl_only",
                          "al@0.05"], runs=2, n=300)
    results = run_plan(plan)
    check_stream_sharing(results)
    assert len(results) == 12
    hashes = {(r.scenario, r.seed): r.stream_hash for r in results}
    assert len(set(hashes.values())) == 4


def test_stream_hash_mismatch_detected():
    a, b = result("a", 0, 1.0), result("b", 0, 1.0)
    a.stream_hash, b.stream_hash = "x", "y"
    with pytest.raises(RuntimeError):
        check_stream_sharing([a, b])


def test_partial_results_are_kept():
    plan = ExperimentPlan(scenarios=["no_overlap"], methods=["sl_only"], runs=3, n=100)
    done: list = []
    run_plan(plan, done)
    assert len(done) == 3
