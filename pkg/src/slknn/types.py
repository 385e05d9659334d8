"""Shared value types: samples, window entries, predictions and the learner config."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = [
    "ConfigError",
    "LabelOrigin",
    "LabeledSample",
    "LearnerConfig",
    "Mode",
    "Prediction",
    "Sample",
    "WindowEntry",
    "validate_config",
]


class ConfigError(ValueError):
    """Raised when a configuration or plan violates a documented constraint."""


class LabelOrigin(enum.Enum):
    GROUND_TRUTH = "ground_truth"
    SELF_LABELED = "self_labeled"


class Mode(enum.Enum):
    """Deployment behaviour of the hybrid learner."""

    SL_ONLY = "sl_only"
    SL_PLUS_AL = "sl_plus_al"
    SL_PLUS_BATCH = "sl_plus_batch"


def _as_features(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"features must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features contain non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """A feature vector observed at arrival index ``t``.

    Equality is value equality on ``(features, t)``.
    """

    features: np.ndarray
    t: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _as_features(self.features))
        if self.t < 0:
            raise ValueError(f"arrival index must be non-negative, got {self.t}")
        object.__setattr__(self, "t", int(self.t))

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.features, other.features)

    def __hash__(self) -> int:
        return hash((self.t, self.features.tobytes()))


@dataclass(frozen=True)
class LabeledSample:
    sample: Sample
    label: int

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValueError(f"labels are dense non-negative integers, got {self.label}")


@dataclass(frozen=True)
class WindowEntry:
    """One stored sample of the k-NN memory."""

    sample: Sample
    label: int
    origin: LabelOrigin
    inserted_at: int


@dataclass(frozen=True)
class Prediction:
    label: int
    certainty: float


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters of the sliding-window learner.

    ``tau_stop`` defaults to ``tau // 5`` and ``tau_al`` to ``tau_stop`` when
    left as ``None``, so changing only the window size keeps the default
    proportions.
    """

    k: int = 5
    tau: int = 100
    tau_stop: int | None = None
    tau_al: int | None = None
    theta_al_factor: float = 0.9
    sl_quantile: float = 0.25
    age_weight_oldest: float = 0.9
    gt_weight: float = 1.0
    sl_weight: float = 0.5
    mode: Mode = Mode.SL_PLUS_AL
    use_age_weight: bool = True
    use_gt_weight: bool = False

    def __post_init__(self) -> None:
        if self.tau_stop is None:
            object.__setattr__(self, "tau_stop", max(1, self.tau // 5))
        if self.tau_al is None:
            object.__setattr__(self, "tau_al", self.tau_stop)
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode))

    def replace(self, **changes) -> LearnerConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return LearnerConfig(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


_BOUNDS: dict[str, tuple] = {
    # name: (check, message)
    "k": (lambda v: isinstance(v, int) and v >= 1, "k must be >= 1"),
    "tau": (lambda v: isinstance(v, int) and v >= 1, "tau must be >= 1"),
    "tau_stop": (lambda v: isinstance(v, int) and v >= 1, "tau_stop must be >= 1"),
    "tau_al": (lambda v: isinstance(v, int) and v >= 1, "tau_al must be >= 1"),
    "theta_al_factor": (lambda v: 0.0 < v <= 1.0, "theta_al_factor must lie in (0, 1]"),
    "sl_quantile": (lambda v: 0.0 < v < 1.0, "sl_quantile must lie in (0, 1)"),
    "age_weight_oldest": (lambda v: 0.0 < v <= 1.0, "age_weight_oldest must lie in (0, 1]"),
    "gt_weight": (lambda v: v >= 1.0, "gt_weight must be >= 1"),
    "sl_weight": (lambda v: 0.0 < v <= 1.0, "sl_weight must lie in (0, 1]"),
}


def validate_config(config: LearnerConfig) -> LearnerConfig:
    """Check every field constraint of ``config`` and return it unchanged.

    Raises
    ------
    ConfigError
        Listing each violated constraint by field name.
    """
    problems = []
    for name, (check, message) in _BOUNDS.items():
        value = getattr(config, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not check(value):
            problems.append(f"{name}={value!r}: {message}")
    if not problems:
        if config.k > config.tau:
            problems.append(f"k={config.k}: k exceeds window capacity tau={config.tau}")
        if config.tau_stop > config.tau:
            problems.append(f"tau_stop={config.tau_stop}: tau_stop exceeds window capacity tau={config.tau}")
    if not isinstance(config.mode, Mode):
        problems.append(f"mode={config.mode!r}: unknown mode")
    if problems:
        raise ConfigError("; ".join(problems))
    return config
