"""Synthetic gradually drifting streams, dataset loaders, PCA and the train/test split."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from slknn.types import LabeledSample, Sample

__all__ = [
    "Dataset",
    "PcaModel",
    "Scenario",
    "ScenarioSpec",
    "StreamOracle",
    "fit_pca",
    "generate",
    "load_dense",
    "load_sparse",
    "reduce_dataset",
    "save_dense",
    "split",
    "transform",
]


class Scenario(enum.Enum):
    NO_OVERLAP = "no_overlap"
    PARTLY_OVERLAPPING = "partly_overlapping"
    CROSSING_DIFFERENT_TIMES = "crossing_different_times"
    CROSSING_SAME_TIME = "crossing_same_time"


# Per-class waypoints (u, mean) with u the normalised stream time in [0, 1].
DEFAULT_TRAJECTORIES: dict[Scenario, tuple] = {
    Scenario.NO_OVERLAP: (
        ((0.0, (0.0, 0.0)), (1.0, (10.0, 0.0))),
        ((0.0, (0.0, 5.0)), (1.0, (10.0, 5.0))),
    ),
    Scenario.PARTLY_OVERLAPPING: (
        ((0.0, (0.0, 0.0)), (1.0, (10.0, 0.0))),
        ((0.0, (0.0, 2.0)), (1.0, (10.0, 2.0))),
    ),
    # Perpendicular paths through the origin; class 0 passes it at u=0.45,
    # class 1 at u=0.53, so the classes visit the same region 160 samples apart.
    Scenario.CROSSING_DIFFERENT_TIMES: (
        ((0.0, (-22.5, 0.0)), (1.0, (27.5, 0.0))),
        ((0.0, (0.0, -26.5)), (1.0, (0.0, 23.5))),
    ),
    # Head-on paths that meet at the midpoint of the stream.
    Scenario.CROSSING_SAME_TIME: (
        ((0.0, (0.0, 0.0)), (1.0, (10.0, 0.5))),
        ((0.0, (10.0, 0.0)), (1.0, (0.0, 0.5))),
    ),
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic stream.

    Each class mean follows a piecewise-linear path through its waypoints;
    samples are drawn around the current mean with isotropic std ``sigma``.
    """

    scenario: Scenario = Scenario.NO_OVERLAP
    n: int = 2000
    sigma: float = 0.5
    seed: int = 0
    class_trajectories: tuple | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.class_trajectories is None:
            object.__setattr__(self, "class_trajectories", DEFAULT_TRAJECTORIES[self.scenario])
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if len(self.class_trajectories) < 2:
            raise ValueError("a stream needs at least two classes")
        dims = {len(p) for traj in self.class_trajectories for _, p in traj}
        if len(dims) != 1:
            raise ValueError("all waypoints must share one dimension")
        for traj in self.class_trajectories:
            us = [u for u, _ in traj]
            if not us or us != sorted(us) or us[0] > 0.0 or us[-1] < 1.0:
                raise ValueError("waypoint times must be sorted and cover [0, 1]")

    @property
    def d(self) -> int:
        return len(self.class_trajectories[0][0][1])

    @property
    def n_classes(self) -> int:
        return len(self.class_trajectories)

    def mean(self, label: int, u) -> np.ndarray:
        """Class mean(s) at normalised time(s) ``u``; shape ``(len(u), d)``."""
        traj = self.class_trajectories[label]
        us = np.array([w[0] for w in traj])
        pts = np.array([w[1] for w in traj], dtype=np.float64)
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        return np.stack([np.interp(u, us, pts[:, j]) for j in range(pts.shape[1])], axis=1)


@dataclass
class Dataset:
    """A labelled stream. ``X`` is dense ``(n, d)`` or a scipy CSR matrix."""

    X: np.ndarray | sp.csr_matrix
    y: np.ndarray
    n_classes: int
    name: str = "stream"
    _samples: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("feature and label counts differ")
        if self.n_classes < 2:
            raise ValueError("a stream needs at least two classes")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        data = self.X.data if sp.issparse(self.X) else self.X
        if not np.all(np.isfinite(data)):
            raise ValueError("stream contains non-finite feature values")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.X)

    @property
    def samples(self) -> list[LabeledSample]:
        if self.is_sparse:
            raise ValueError("sparse datasets must be reduced to dense features first")
        if self._samples is None:
            self._samples = [
                LabeledSample(Sample(self.X[t], t), int(self.y[t])) for t in range(len(self))
            ]
        return self._samples

    def digest(self) -> str:
        """SHA-256 over features and labels; identical streams share a digest."""
        h = hashlib.sha256()
        if self.is_sparse:
            for part in (self.X.data, self.X.indices, self.X.indptr):
                h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(np.ascontiguousarray(self.X, dtype=np.float64).tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()


def generate(spec: ScenarioSpec) -> Dataset:
    """Draw ``spec.n`` samples; class draws are uniform i.i.d. per step."""
    rng = np.random.default_rng(spec.seed)
    y = rng.integers(0, spec.n_classes, size=spec.n)
    noise = rng.normal(0.0, spec.sigma, size=(spec.n, spec.d))
    u = np.arange(spec.n) / spec.n
    means = np.empty((spec.n, spec.d))
    for c in range(spec.n_classes):
        mask = y == c
        means[mask] = spec.mean(c, u[mask])
    return Dataset(means + noise, y, spec.n_classes, name=spec.scenario.value)


class StreamOracle:
    """Label oracle over a stream that counts every query."""

    def __init__(self, labels: np.ndarray, offset: int = 0) -> None:
        self._labels = np.asarray(labels)
        self.offset = offset
        self.queries = 0

    def __call__(self, t: int) -> int:
        self.queries += 1
        return self.peek(t)

    def peek(self, t: int) -> int:
        """Ground truth for scoring; not counted as a query."""
        i = t - self.offset
        if not 0 <= i < self._labels.shape[0]:
            raise IndexError(f"no label for arrival index {t}")
        return int(self._labels[i])


def split(dataset: Dataset, train_fraction: float = 0.1):
    """Split a stream into a labelled prefix and a deployment segment.

    Returns
    -------
    s_train : list of LabeledSample
        The first ``floor(train_fraction * n)`` samples.
    s_test : list of Sample
        The remaining samples, labels withheld.
    oracle : StreamOracle
        Answers label queries for ``s_test``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(np.floor(train_fraction * len(dataset)))
    samples = dataset.samples
    s_train = samples[:n_train]
    s_test = [ls.sample for ls in samples[n_train:]]
    return s_train, s_test, StreamOracle(dataset.y[n_train:], offset=n_train)


# -- PCA ------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (out_dim, d), orthonormal rows
    explained_variance: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.components.shape[0]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_pca(train_features, out_dim: int = 10) -> PcaModel:
    """Exact PCA of the training rows.

    Dense inputs with ``d <= n`` use the covariance matrix; otherwise the
    ``n x n`` Gram matrix of the centred rows is decomposed, which keeps
    memory independent of ``d`` and never densifies a sparse input.
    """
    sparse = sp.issparse(train_features)
    X = sp.csr_matrix(train_features, dtype=np.float64) if sparse else np.asarray(train_features, dtype=np.float64)
    n, d = X.shape
    if out_dim < 1 or out_dim > d:
        raise ValueError(f"out_dim must lie in [1, {d}], got {out_dim}")
    if n <= out_dim:
        raise ValueError(f"need more than out_dim={out_dim} training rows, got {n}")
    mean = np.asarray(X.mean(axis=0)).ravel()

    if not sparse and d <= n:
        Xc = X - mean
        evals, evecs = np.linalg.eigh(Xc.T @ Xc / (n - 1))
        order = np.argsort(evals)[::-1]
        evals, comps = evals[order], evecs[:, order].T
    else:
        # centred Gram matrix G = Xc Xc^T without forming Xc
        G = X @ X.T
        G = G.toarray() if sparse else np.asarray(G)
        row_dot = np.asarray(X @ mean).ravel()
        G = G - row_dot[:, None] - row_dot[None, :] + mean @ mean
        evals, U = np.linalg.eigh((G + G.T) / 2)
        order = np.argsort(evals)[::-1]
        evals, U = evals[order], U[:, order]
        keep = evals > max(evals[0], 0.0) * 1e-12
        U, svals = U[:, keep], np.sqrt(evals[keep])
        # V = Xc^T U / s
        XtU = np.asarray(X.T @ U) - np.outer(mean, U.sum(axis=0))
        comps = (XtU / svals).T
        evals = evals[keep] / (n - 1)

    tol = max(evals[0], 0.0) * 1e-10 if evals.size else 0.0
    rank = int(np.sum(evals > tol)) if evals.size and evals[0] > 0 else 0
    if rank < out_dim:
        raise ValueError(f"training features have rank {rank}, cannot extract {out_dim} components")
    comps = _fix_signs(comps[:out_dim])
    return PcaModel(mean=mean, components=comps, explained_variance=evals[:out_dim].copy())


def transform(model: PcaModel, x) -> np.ndarray:
    """Project centred rows (or a single vector) onto the principal components."""
    if isinstance(x, Sample):
        return Sample(transform(model, x.features), x.t)
    if sp.issparse(x):
        return np.asarray(x @ model.components.T) - model.mean @ model.components.T
    x = np.asarray(x, dtype=np.float64)
    return (x - model.mean) @ model.components.T


def reduce_dataset(dataset: Dataset, out_dim: int = 10, train_fraction: float = 0.1) -> Dataset:
    """PCA-reduce a stream with the projection fitted on its training prefix only."""
    n_train = int(np.floor(train_fraction * len(dataset)))
    model = fit_pca(dataset.X[:n_train], out_dim)
    return Dataset(transform(model, dataset.X), dataset.y, dataset.n_classes, name=dataset.name)


# -- file formats ---------------------------------------------------------


def _densify_labels(raw: list) -> tuple[np.ndarray, int]:
    classes = sorted(set(raw))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[c] for c in raw], dtype=np.int64), len(classes)


def _parse_label(token: str):
    value = float(token)
    return int(value) if value.is_integer() else value


def load_sparse(path, max_features: int | None = None) -> Dataset:
    """Read ``label idx:val ...`` lines (1-based indices) into a CSR dataset.

    Labels are mapped to ``0..C-1`` in sorted order of the original values.
    """
    raw_labels, indptr, indices, values = [], [0], [], []
    d = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            try:
                raw_labels.append(_parse_label(tokens[0]))
                for tok in tokens[1:]:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    if idx < 1:
                        raise ValueError(f"feature index {idx} is not 1-based")
                    if max_features is not None and idx > max_features:
                        raise ValueError(f"feature index {idx} exceeds max_features={max_features}")
                    indices.append(idx - 1)
                    values.append(float(val_s))
                    d = max(d, idx)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed line ({exc})") from None
            indptr.append(len(indices))
    if not raw_labels:
        raise ValueError(f"{path}: no samples")
    y, n_classes = _densify_labels(raw_labels)
    X = sp.csr_matrix(
        (np.array(values), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(raw_labels), max_features or d),
    )
    X.sum_duplicates()
    return Dataset(X, y, n_classes, name=Path(path).stem)


def load_dense(path, delimiter: str = ",") -> Dataset:
    """Read header-less delimited rows whose last column is the integer label."""
    data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    y, n_classes = _densify_labels([int(v) if v.is_integer() else float(v) for v in data[:, -1].tolist()])
    return Dataset(data[:, :-1], y, n_classes, name=Path(path).stem)


def save_dense(dataset: Dataset, path, delimiter: str = ",") -> None:
    if dataset.is_sparse:
        raise ValueError("only dense datasets can be exported")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, label in zip(dataset.X, dataset.y):
            fh.write(delimiter.join(repr(float(v)) for v in row) + f"{delimiter}{int(label)}\n")
