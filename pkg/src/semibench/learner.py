"""Binary classifier interface and the reference random forest.

Any object with ``fit(X, y) -> model`` where ``model.predict(X)`` returns
:class:`Predictions` can stand in for :class:`ForestLearner`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import _forest
from .dataset import ClassRatio, LabeledDataset
from .seeding import MASK64, splitmix_value


class LearnerError(ValueError):
    pass


class EmptyTrainingSet(LearnerError):
    pass


class DimensionMismatch(LearnerError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")

    def with_seed(self, seed: int) -> "LearnerConfig":
        return LearnerConfig(self.n_trees, self.max_depth, self.min_leaf, self.bootstrap, seed)

    @staticmethod
    def features_per_split(dim: int) -> int:
        return max(1, math.isqrt(dim))


@dataclass(frozen=True)
class Prediction:
    label: int
    p_malicious: float
    confidence: float


@dataclass(frozen=True, eq=False)
class Predictions:
    """Vote tallies for a batch of samples.

    ``confidence`` is the vote margin ``2 * |p_malicious - 0.5|``, computed
    from integer counts so it is exactly 0 on a tied vote. Ties go benign.
    """

    votes: np.ndarray
    n_trees: int
    labels: np.ndarray = field(init=False)
    p_malicious: np.ndarray = field(init=False)
    confidence: np.ndarray = field(init=False)

    def __post_init__(self):
        votes = np.asarray(self.votes, dtype=np.int64)
        object.__setattr__(self, "votes", votes)
        object.__setattr__(self, "labels", (2 * votes > self.n_trees).astype(np.int64))
        object.__setattr__(self, "p_malicious", votes / self.n_trees)
        object.__setattr__(self, "confidence", np.abs(2 * votes - self.n_trees) / self.n_trees)

    def __len__(self) -> int:
        return len(self.votes)

    def __getitem__(self, i: int) -> Prediction:
        return Prediction(int(self.labels[i]), float(self.p_malicious[i]), float(self.confidence[i]))


def margin_confidence(p_malicious: float) -> float:
    return 2.0 * abs(p_malicious - 0.5)


class Model(Protocol):
    dim: int

    def predict(self, X: np.ndarray) -> Predictions: ...


class Learner(Protocol):
    def fit(self, X: np.ndarray, y: np.ndarray) -> Model: ...


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Flattened forest: node arrays of all trees, ``roots[t]`` indexing tree ``t``."""

    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_benign: np.ndarray
    n_malicious: np.ndarray
    dim: int
    train_size: int
    train_ratio: ClassRatio | None
    config: LearnerConfig

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def leaf_vote(self) -> np.ndarray:
        return (self.n_malicious > self.n_benign).astype(np.int64)

    def predict(self, X) -> Predictions:
        X = _as_matrix(X)
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"model expects {self.dim} features, got {X.shape[1]}")
        votes = _forest.count_votes(X, self.roots, self.feature, self.threshold,
                                    self.left, self.right, self.leaf_vote)
        return Predictions(votes, self.n_trees)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.ascontiguousarray(X)


def tree_seed(seed: int, tree_index: int) -> int:
    return splitmix_value(int(seed) & MASK64, tree_index)


def fit_arrays(X, y, config: LearnerConfig) -> FittedModel:
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if len(y) == 0:
        raise EmptyTrainingSet("cannot fit on an empty training set")
    if len(X) != len(y):
        raise DimensionMismatch("feature rows and labels differ in length")
    n, dim = X.shape
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    sorted_vals = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
    mtry = LearnerConfig.features_per_split(dim)
    max_depth = -1 if config.max_depth is None else config.max_depth
    parts = []
    offset = 0
    roots = np.empty(config.n_trees, dtype=np.int64)
    for t in range(config.n_trees):
        feat, thr, left, right, c0, c1 = _forest.grow_tree(
            X, y, order, sorted_vals, np.uint64(tree_seed(config.seed, t)), config.bootstrap,
            max_depth, config.min_leaf, mtry)
        roots[t] = offset
        internal = feat >= 0
        left = np.where(internal, left + offset, -1)
        right = np.where(internal, right + offset, -1)
        parts.append((feat, thr, left, right, c0, c1))
        offset += len(feat)
    cols = [np.concatenate(col) for col in zip(*parts)]
    return FittedModel(roots, *cols, dim=dim, train_size=n, train_ratio=_ratio(y), config=config)


def _ratio(y: np.ndarray) -> ClassRatio:
    n = len(y)
    benign = (200 * int(np.count_nonzero(y == 0)) + n) // (2 * n)
    return ClassRatio(benign, 100 - benign)


def fit(train: LabeledDataset, config: LearnerConfig) -> FittedModel:
    if len(train) == 0:
        raise EmptyTrainingSet("cannot fit on an empty training set")
    return fit_arrays(train.X, train.y, config)


def predict(model: Model, samples) -> Predictions:
    return model.predict(samples)


class ForestLearner:
    """Random forest learner with a fixed configuration."""

    def __init__(self, config: LearnerConfig | None = None):
        self.config = config or LearnerConfig()

    def fit(self, X, y) -> FittedModel:
        return fit_arrays(X, y, self.config)

    def __repr__(self) -> str:
        return f"ForestLearner({self.config})"


def warm_up() -> None:
    """Load or compile the forest kernels so the first timed fit is not charged for it."""
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    for writable in (True, False):
        X.setflags(write=writable)
        fit_arrays(X, y, LearnerConfig(n_trees=1)).predict(X)
