"""Hybrid self-labeling learner with demand-triggered active learning.

Lifecycle: ``train_step`` over the labelled prefix of the stream,
``finalize_training`` to calibrate the self-labeling threshold from the
certainties of correct predictions, then ``test_step`` per deployed sample.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from typing import Protocol, TextIO

import numpy as np

from slknn.types import ConfigError, LabelOrigin, LearnerConfig, Mode, Prediction, Sample, validate_config
from slknn.window import SlidingWindow

__all__ = [
    "BaseLearner",
    "CertaintyCalibration",
    "HybridLearner",
    "make_hybrid",
    "LabelOracle",
    "Phase",
    "PhaseError",
    "StepOutcome",
    "Update",
]


class PhaseError(RuntimeError):
    """A step was called in the wrong lifecycle phase."""


class Phase(enum.Enum):
    TRAINING = "training"
    DEPLOYED = "deployed"


class Update(enum.Enum):
    GROUND_TRUTH = "ground_truth"
    SELF_LABEL = "self_label"
    NONE = "none"


class LabelOracle(Protocol):
    """Returns the true label of the sample that arrived at index ``t``."""

    def __call__(self, t: int) -> int: ...


@dataclass(frozen=True)
class StepOutcome:
    """Audit record of one learner step.

    ``prediction`` is ``None`` only when the window was empty (abstain).
    """

    prediction: Prediction | None
    updated_with: Update
    label_requested: bool = False

    def __post_init__(self) -> None:
        if self.label_requested and self.updated_with is not Update.GROUND_TRUTH:
            raise ValueError("a requested label must be used for a ground-truth update")


class CertaintyCalibration:
    """Certainties of correct train-phase predictions."""

    def __init__(self) -> None:
        self.correct_certainties: list[float] = []

    def __len__(self) -> int:
        return len(self.correct_certainties)

    def append(self, certainty: float) -> None:
        self.correct_certainties.append(float(certainty))

    def threshold(self, quantile: float) -> float:
        if not self.correct_certainties:
            raise ConfigError(
                "no correct predictions during training, so the self-labeling threshold "
                "cannot be calibrated; use a longer labelled training segment"
            )
        # numpy's default "linear" method interpolates between order statistics
        return float(np.quantile(self.correct_certainties, quantile))


class BaseLearner:
    """Sliding-window k-NN learner sharing the supervised training phase.

    Subclasses implement ``test_step`` for the deployment phase.
    """

    #: whether deployment needs the calibrated self-labeling threshold
    needs_threshold = True

    def __init__(self, config: LearnerConfig | None = None, audit: TextIO | None = None) -> None:
        self.config = validate_config(config or LearnerConfig())
        self.window = SlidingWindow(self.config.tau)
        self.calibration = CertaintyCalibration()
        self.phase = Phase.TRAINING
        self.theta_sl: float | None = None
        self.theta_al: float | None = None
        self.labels_requested = 0
        self._audit = audit

    def predict(self, x: Sample) -> Prediction | None:
        return self.window._predict(x.features, self.config) if len(self.window) else None

    def train_step(self, x: Sample, y: int) -> StepOutcome:
        if self.phase is not Phase.TRAINING:
            raise PhaseError("train_step called after finalize_training")
        prediction = self.predict(x)
        self.window.add(x, y, LabelOrigin.GROUND_TRUTH)
        if prediction is not None and prediction.label == y:
            self.calibration.append(prediction.certainty)
        outcome = StepOutcome(prediction, Update.GROUND_TRUTH)
        self._log(x, outcome)
        return outcome

    def finalize_training(self) -> None:
        if self.phase is not Phase.TRAINING:
            raise PhaseError("training already finalized")
        if len(self.window) == 0:
            raise ConfigError("training segment is empty")
        if self.needs_threshold or len(self.calibration):
            self.theta_sl = self.calibration.threshold(self.config.sl_quantile)
            self.theta_al = self.config.theta_al_factor * self.theta_sl
        self.phase = Phase.DEPLOYED

    def _require_deployed(self) -> None:
        if self.phase is not Phase.DEPLOYED:
            raise PhaseError("test_step called before finalize_training")

    def test_step(self, x: Sample, oracle: LabelOracle) -> StepOutcome:
        raise NotImplementedError

    def _log(self, x: Sample, outcome: StepOutcome, **extra) -> None:
        if self._audit is None:
            return
        pred = outcome.prediction
        record = {
            "t": x.t,
            "phase": self.phase.value,
            "y_hat": None if pred is None else pred.label,
            "c": None if pred is None else pred.certainty,
            "action": outcome.updated_with.value,
            "requested": outcome.label_requested,
        }
        record.update(extra)
        self._audit.write(json.dumps(record) + "\n")


class HybridLearner(BaseLearner):
    """Self-labeling k-NN learner that opens active-learning windows on demand.

    After deployment every prediction with certainty above ``theta_sl`` is
    added to the window under its predicted label. When the mean certainty
    of the last ``tau_stop`` predictions drops below ``theta_al`` an
    active-learning window of ``tau_al`` steps opens. Inside it, ``SL_PLUS_AL``
    queries the oracle for samples too uncertain to self-label, while
    ``SL_PLUS_BATCH`` queries every sample. ``SL_ONLY`` never queries.
    """

    def __init__(self, config: LearnerConfig | None = None, audit: TextIO | None = None) -> None:
        super().__init__(config, audit)
        self.mode = self.config.mode
        self.recent_certainties: deque[float] = deque(maxlen=self.config.tau_stop)
        self.al_credit = 0
        self.trigger_count = 0

    def test_step(self, x: Sample, oracle: LabelOracle) -> StepOutcome:
        self._require_deployed()
        prediction = self.predict(x)
        c = prediction.certainty
        self.recent_certainties.append(c)

        if self.mode is Mode.SL_PLUS_BATCH and self.al_credit > 0:
            outcome = self._query(x, prediction, oracle)
        elif c > self.theta_sl:
            self.window.add(x, prediction.label, LabelOrigin.SELF_LABELED)
            outcome = StepOutcome(prediction, Update.SELF_LABEL)
        elif self.mode is Mode.SL_PLUS_AL and self.al_credit > 0:
            outcome = self._query(x, prediction, oracle)
        else:
            outcome = StepOutcome(prediction, Update.NONE)

        self.al_credit = max(0, self.al_credit - 1)
        fired = False
        if (
            self.al_credit <= 0
            and len(self.recent_certainties) == self.config.tau_stop
            and sum(self.recent_certainties) / self.config.tau_stop < self.theta_al
        ):
            self.al_credit = self.config.tau_al
            self.trigger_count += 1
            fired = True
        self._log(x, outcome, credit=self.al_credit, trigger=fired)
        return outcome

    def _query(self, x: Sample, prediction: Prediction, oracle: LabelOracle) -> StepOutcome:
        y = oracle(x.t)
        self.labels_requested += 1
        self.window.add(x, y, LabelOrigin.GROUND_TRUTH)
        return StepOutcome(prediction, Update.GROUND_TRUTH, label_requested=True)


def make_hybrid(mode: Mode | str, config: LearnerConfig | None = None, **kwargs) -> HybridLearner:
    config = (config or LearnerConfig()).replace(mode=Mode(mode))
    return HybridLearner(config, **kwargs)

