"""Reference learners: fully supervised, vanilla self-labeling, budgeted AL and AL+SL.

All baselines share the sliding-window k-NN and the supervised training
phase of :class:`~slknn.learner.BaseLearner`; they differ only in how a
deployed sample is used.
"""

from __future__ import annotations

import enum
import math
from typing import TextIO

import numpy as np

from slknn.learner import BaseLearner, HybridLearner, LabelOracle, StepOutcome, Update
from slknn.types import LabelOrigin, LearnerConfig, Mode, Sample
from slknn.window import SlidingWindow

__all__ = [
    "BudgetManager",
    "BudgetedALLearner",
    "Strategy",
    "SupervisedLearner",
    "al_plus_sl_step",
    "budget_al_step",
    "supervised_step",
    "vanilla_sl_step",
]


class Strategy(enum.Enum):
    RANDOM_RATE = "random_rate"
    VARIABLE_UNCERTAINTY = "variable_uncertainty"


class BudgetManager:
    """Decides which deployed samples are labelled under a fixed budget.

    A query is only ever allowed while ``spent < budget * seen`` (``seen``
    includes the current sample), so ``spent <= ceil(budget * seen) + 1``
    holds on every prefix.

    ``RANDOM_RATE`` queries an allowed sample with probability ``budget``.
    ``VARIABLE_UNCERTAINTY`` is the randomised variable-uncertainty rule of
    Zliobaite et al. (2014): query when the certainty falls below a
    randomised threshold ``theta * N(1, spread)``; the threshold shrinks by
    ``step`` after each query and grows by ``step`` otherwise.

    Parameters
    ----------
    budget : float
        Target fraction of labelled samples, in ``[0, 1]``.
    strategy : Strategy or str
    rng : numpy.random.Generator, optional
    step : float, default=0.01
        Multiplicative threshold adjustment of the uncertainty strategy.
    spread : float, default=1.0
        Standard deviation of the threshold randomisation.
    """

    def __init__(
        self,
        budget: float,
        strategy: Strategy | str = Strategy.VARIABLE_UNCERTAINTY,
        rng: np.random.Generator | None = None,
        step: float = 0.01,
        spread: float = 1.0,
    ) -> None:
        if not 0.0 <= budget <= 1.0:
            raise ValueError(f"budget must lie in [0, 1], got {budget}")
        self.budget = float(budget)
        self.strategy = Strategy(strategy)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.step = step
        self.spread = spread
        self.threshold = 1.0
        self.spent = 0
        self.seen = 0

    def within_cap(self) -> bool:
        return self.spent < self.budget * self.seen

    def decide(self, certainty: float) -> bool:
        """Register one sample and return whether its label is requested."""
        self.seen += 1
        if not self.within_cap():
            return False
        if self.strategy is Strategy.RANDOM_RATE:
            query = self.rng.random() < self.budget
        else:
            randomized = self.threshold * self.rng.normal(1.0, self.spread)
            query = certainty < randomized
            self.threshold *= (1.0 - self.step) if query else (1.0 + self.step)
        if query:
            self.spent += 1
        return query

    def cap(self) -> int:
        return math.ceil(self.budget * self.seen) + 1


def supervised_step(window: SlidingWindow, x: Sample, y: int, config: LearnerConfig) -> StepOutcome:
    prediction = window._predict(x.features, config)
    window.add(x, y, LabelOrigin.GROUND_TRUTH)
    return StepOutcome(prediction, Update.GROUND_TRUTH, label_requested=True)


def budget_al_step(
    window: SlidingWindow,
    budget_mgr: BudgetManager,
    x: Sample,
    oracle: LabelOracle,
    config: LearnerConfig,
) -> StepOutcome:
    """Budgeted AL: label the sample if the budget manager selects it, else discard it."""
    return al_plus_sl_step(window, budget_mgr, math.inf, x, oracle, config)


def al_plus_sl_step(
    window: SlidingWindow,
    budget_mgr: BudgetManager,
    theta_sl: float,
    x: Sample,
    oracle: LabelOracle,
    config: LearnerConfig,
) -> StepOutcome:
    """Budgeted AL with a self-labeling fallback for samples not selected."""
    prediction = window._predict(x.features, config)
    if budget_mgr.decide(prediction.certainty):
        window.add(x, oracle(x.t), LabelOrigin.GROUND_TRUTH)
        return StepOutcome(prediction, Update.GROUND_TRUTH, label_requested=True)
    if prediction.certainty > theta_sl:
        window.add(x, prediction.label, LabelOrigin.SELF_LABELED)
        return StepOutcome(prediction, Update.SELF_LABEL)
    return StepOutcome(prediction, Update.NONE)


def vanilla_sl_step(learner: HybridLearner, x: Sample, oracle: LabelOracle) -> StepOutcome:
    """Deployment step of the plain self-labeling learner (never queries)."""
    if learner.mode is not Mode.SL_ONLY:
        raise ValueError("vanilla_sl_step requires a learner in SL_ONLY mode")
    return learner.test_step(x, oracle)


class SupervisedLearner(BaseLearner):
    """Receives the true label of every deployed sample."""

    needs_threshold = False

    def test_step(self, x: Sample, oracle: LabelOracle) -> StepOutcome:
        self._require_deployed()
        outcome = supervised_step(self.window, x, oracle(x.t), self.config)
        self.labels_requested += 1
        self._log(x, outcome)
        return outcome


class BudgetedALLearner(BaseLearner):
    """Fixed-budget active learner, optionally self-labeling unselected samples."""

    def __init__(
        self,
        config: LearnerConfig | None,
        budget_mgr: BudgetManager,
        self_label: bool = False,
        audit: TextIO | None = None,
    ) -> None:
        super().__init__(config, audit)
        self.budget_mgr = budget_mgr
        self.self_label = self_label
        self.needs_threshold = self_label

    def test_step(self, x: Sample, oracle: LabelOracle) -> StepOutcome:
        self._require_deployed()
        if self.self_label:
            outcome = al_plus_sl_step(self.window, self.budget_mgr, self.theta_sl, x, oracle, self.config)
        else:
            outcome = budget_al_step(self.window, self.budget_mgr, x, oracle, self.config)
        self.labels_requested += outcome.label_requested
        self._log(x, outcome, spent=self.budget_mgr.spent, seen=self.budget_mgr.seen)
        return outcome
