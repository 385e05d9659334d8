"""Sliding-window k-NN memory with age- and origin-weighted voting.

The window is a fixed-capacity FIFO ring buffer backed by numpy arrays so a
prediction over ``tau`` entries is a handful of vectorised operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slknn.types import LabelOrigin, LearnerConfig, Prediction, Sample, WindowEntry

__all__ = ["EPS_DISTANCE", "SlidingWindow", "WeightedNeighbor"]

#: Distances are floored here before inversion so exact duplicates dominate the vote.
EPS_DISTANCE = 1e-12


@dataclass(frozen=True)
class WeightedNeighbor:
    entry: WindowEntry
    distance: float
    age_weight: float
    gt_weight: float


class SlidingWindow:
    """FIFO memory holding at most ``capacity`` labelled samples.

    Parameters
    ----------
    capacity : int
        Window size; inserting into a full window evicts the oldest entry.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.step_counter = 0
        self._size = 0
        self._next = 0  # slot written by the next insertion
        self._dim: int | None = None
        self._X: np.ndarray | None = None
        self._labels = np.zeros(self.capacity, dtype=np.int64)
        self._is_gt = np.zeros(self.capacity, dtype=bool)
        self._stamp = np.zeros(self.capacity, dtype=np.int64)
        self._t = np.zeros(self.capacity, dtype=np.int64)
        self._last_stamp = -1

    def __len__(self) -> int:
        return self._size

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def is_full(self) -> bool:
        return self._size == self.capacity

    # -- mutation ---------------------------------------------------------

    def insert(self, entry: WindowEntry) -> None:
        """Append ``entry``, evicting the oldest entry if the window is full."""
        if entry.inserted_at <= self._last_stamp:
            raise ValueError(
                f"inserted_at must strictly increase: {entry.inserted_at} <= {self._last_stamp}"
            )
        self._store(
            entry.sample.features,
            entry.sample.t,
            entry.label,
            entry.origin is LabelOrigin.GROUND_TRUTH,
            entry.inserted_at,
        )

    def add(self, sample: Sample, label: int, origin: LabelOrigin) -> None:
        """Append a sample stamped with the window's own step counter."""
        stamp = max(self.step_counter, self._last_stamp + 1)
        self._store(sample.features, sample.t, label, origin is LabelOrigin.GROUND_TRUTH, stamp)

    def _store(self, features, t, label, is_gt, stamp) -> None:
        if self._X is None:
            self._dim = features.shape[0]
            self._X = np.zeros((self.capacity, self._dim), dtype=np.float64)
        elif features.shape[0] != self._dim:
            raise ValueError(f"dimension mismatch: window holds {self._dim}-d samples, got {features.shape[0]}")
        slot = self._next
        self._X[slot] = features
        self._labels[slot] = label
        self._is_gt[slot] = is_gt
        self._stamp[slot] = stamp
        self._t[slot] = t
        self._last_stamp = stamp
        self._next = (slot + 1) % self.capacity
        if self._size < self.capacity:
            self._size += 1
        self.step_counter += 1

    # -- inspection -------------------------------------------------------

    def _chrono_slots(self) -> np.ndarray:
        """Occupied slots ordered oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def _entry(self, slot: int) -> WindowEntry:
        origin = LabelOrigin.GROUND_TRUTH if self._is_gt[slot] else LabelOrigin.SELF_LABELED
        return WindowEntry(
            sample=Sample(self._X[slot].copy(), int(self._t[slot])),
            label=int(self._labels[slot]),
            origin=origin,
            inserted_at=int(self._stamp[slot]),
        )

    @property
    def entries(self) -> list[WindowEntry]:
        """Current contents, oldest first."""
        return [self._entry(s) for s in self._chrono_slots()]

    def _slot_of(self, entry: WindowEntry) -> int:
        hits = np.flatnonzero(self._stamp[: self._size] == entry.inserted_at)
        if hits.size == 0:
            raise KeyError(f"entry inserted at {entry.inserted_at} is not in the window")
        return int(hits[0])

    # -- weights ----------------------------------------------------------

    def _age_weights(self, config: LearnerConfig) -> np.ndarray:
        """Per-slot age weight, linear in chronological rank (newest 1)."""
        n = self._size
        if not config.use_age_weight or n == 1:
            return np.ones(n)
        if n < self.capacity:
            rank = np.arange(n)
        else:
            rank = (np.arange(n) - self._next) % n
        oldest = config.age_weight_oldest
        return oldest + (1.0 - oldest) * rank / (n - 1)

    def _gt_weights(self, config: LearnerConfig) -> np.ndarray:
        n = self._size
        if not config.use_gt_weight:
            return np.ones(n)
        return np.where(self._is_gt[:n], config.gt_weight, config.sl_weight)

    def age_weight(self, entry: WindowEntry, config: LearnerConfig) -> float:
        return float(self._age_weights(config)[self._slot_of(entry)])

    def gt_weight(self, entry: WindowEntry, config: LearnerConfig) -> float:
        self._slot_of(entry)
        return origin_weight(entry.origin, config)

    def normalizers(self, k: int, config: LearnerConfig) -> tuple[float, float]:
        """Mean of the ``k`` largest age weights and of the ``k`` largest origin weights."""
        self._require_entries()
        return self._normalizers(k, self._age_weights(config), self._gt_weights(config))

    @staticmethod
    def _normalizers(k, age_w, gt_w) -> tuple[float, float]:
        m = min(k, age_w.shape[0])
        top_age = np.partition(age_w, -m)[-m:]
        top_gt = np.partition(gt_w, -m)[-m:]
        return float(top_age.mean()), float(top_gt.mean())

    # -- queries ----------------------------------------------------------

    def _require_entries(self) -> None:
        if self._size == 0:
            raise ValueError("window is empty")

    def _nearest(self, x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        n = self._size
        if x.shape[0] != self._dim:
            raise ValueError(f"dimension mismatch: window holds {self._dim}-d samples, got {x.shape[0]}")
        diff = self._X[:n] - x
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        # primary key distance, ties go to the newer entry
        order = np.lexsort((-self._stamp[:n], dist))[: min(k, n)]
        return order, dist[order]

    def neighbors(self, x: Sample, k: int, config: LearnerConfig | None = None) -> list[WeightedNeighbor]:
        """The ``min(k, len(self))`` nearest entries, closest first.

        Weights are taken from ``config``; without one every weight is 1.
        """
        self._require_entries()
        slots, dist = self._nearest(x.features, k)
        if config is None:
            age_w = gt_w = np.ones(self._size)
        else:
            age_w = self._age_weights(config)
            gt_w = self._gt_weights(config)
        return [
            WeightedNeighbor(self._entry(s), float(d), float(age_w[s]), float(gt_w[s]))
            for s, d in zip(slots, dist)
        ]

    def predict(self, x: Sample, config: LearnerConfig) -> Prediction:
        """Weighted k-NN vote and its normalised certainty.

        Each neighbour votes for its label with weight
        ``gt_weight * age_weight / distance``. Certainty is the winning
        share of the vote divided by the product of the two normalisers,
        clamped to ``[0, 1]``. Ties in the vote go to the smallest label.
        """
        self._require_entries()
        return self._predict(x.features, config)

    def _predict(self, x: np.ndarray, config: LearnerConfig) -> Prediction:
        slots, dist = self._nearest(x, config.k)
        age_w = self._age_weights(config)
        gt_w = self._gt_weights(config)
        norm_age, norm_gt = self._normalizers(config.k, age_w, gt_w)
        inv = 1.0 / np.maximum(dist, EPS_DISTANCE)
        votes = np.bincount(self._labels[slots], weights=gt_w[slots] * age_w[slots] * inv)
        label = int(np.argmax(votes))
        certainty = votes[label] / (norm_gt * norm_age * inv.sum())
        return Prediction(label, float(min(1.0, max(0.0, certainty))))


def origin_weight(origin: LabelOrigin, config: LearnerConfig) -> float:
    if not config.use_gt_weight:
        return 1.0
    return config.gt_weight if origin is LabelOrigin.GROUND_TRUTH else config.sl_weight
