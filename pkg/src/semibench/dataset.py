"""Source datasets and the Prepare stage partitioning.

A fully labelled source dataset is split into a held-out future set and a
training pool. The pool is then divided, under a labelling budget, into a
small labelled set and an unlabelled pool whose ground truth stays hidden
from learners.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

BENIGN = 0
MALICIOUS = 1
CLASS_NAMES = {BENIGN: "benign", MALICIOUS: "malicious"}


class DatasetError(ValueError):
    """Base class for dataset and partitioning errors."""


class MissingFile(DatasetError, FileNotFoundError):
    pass


class ParseError(DatasetError):
    def __init__(self, row: int, column: str, message: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class EmptyDataset(DatasetError):
    pass


class SingleClassDataset(DatasetError):
    pass


class TooFewSamples(DatasetError):
    def __init__(self, label: int, have: int, need: int):
        self.label = label
        super().__init__(f"{CLASS_NAMES[label]} class has {have} samples, need at least {need}")


class InsufficientBudget(DatasetError):
    pass


class PoolExhausted(DatasetError):
    def __init__(self, label: int | None, have: int, need: int):
        self.label = label
        what = "" if label is None else CLASS_NAMES[label] + " "
        super().__init__(f"pool holds {have} {what}samples, {need} required")


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int
    id: int


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``X`` (n x dim), binary labels ``y`` and unique ``ids``."""

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DatasetError("feature matrix must be 2-D")
        y = np.asarray(self.y, dtype=np.int64)
        ids = np.asarray(self.ids, dtype=np.int64)
        if not (len(X) == len(y) == len(ids)):
            raise DatasetError("X, y and ids must have equal length")
        if len(y) and not np.isin(y, (BENIGN, MALICIOUS)).all():
            raise DatasetError("labels must be 0 or 1")
        if len(np.unique(ids)) != len(ids):
            raise DatasetError("sample ids must be distinct")
        for arr in (X, y, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_arrays(cls, X, y, name: str = "dataset") -> "LabeledDataset":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        return cls(X, y, np.arange(len(X)), name)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.y[i]), int(self.ids[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.y == label))

    def take(self, positions, name: str | None = None) -> "LabeledDataset":
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(self.X[positions], self.y[positions], self.ids[positions],
                              self.name if name is None else name)

    def sorted_by_id(self) -> "LabeledDataset":
        order = np.argsort(self.ids, kind="stable")
        return self.take(order)

    def same_samples(self, other: "LabeledDataset") -> bool:
        return (self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.ids, other.ids))


class UnlabeledPool:
    """Samples whose labels are masked from learners.

    ``features`` and ``ids`` are freely readable. Ground truth is reachable
    only through :meth:`oracle` (active-learning label requests) and
    :meth:`ground_truth` (audits and evaluation bookkeeping).
    """

    masked = True

    def __init__(self, X: np.ndarray, ids: np.ndarray, truth: np.ndarray):
        self._X = np.ascontiguousarray(X, dtype=np.float64)
        self._ids = np.asarray(ids, dtype=np.int64)
        self._truth = np.asarray(truth, dtype=np.int64)
        for arr in (self._X, self._ids, self._truth):
            arr.setflags(write=False)

    @classmethod
    def from_dataset(cls, d: LabeledDataset) -> "UnlabeledPool":
        return cls(d.X, d.ids, d.y)

    @property
    def features(self) -> np.ndarray:
        return self._X

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def dim(self) -> int:
        return self._X.shape[1]

    def __len__(self) -> int:
        return len(self._ids)

    def oracle(self, positions) -> np.ndarray:
        """Reveal the true labels of the samples at ``positions``."""
        return self._truth[np.asarray(positions, dtype=np.int64)]

    def ground_truth(self) -> np.ndarray:
        return self._truth

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self._truth == label))


@dataclass(frozen=True)
class ClassRatio:
    benign_pct: int
    malicious_pct: int

    def __str__(self) -> str:
        return f"{self.benign_pct}:{self.malicious_pct}"


def class_ratio(d: LabeledDataset | UnlabeledPool) -> ClassRatio:
    """Integer class percentages; benign rounded half-up, malicious the remainder."""
    n = len(d)
    if n == 0:
        raise EmptyDataset("class ratio of an empty set")
    n_b = d.count(BENIGN)
    benign = (200 * n_b + n) // (2 * n)
    return ClassRatio(benign, 100 - benign)


@dataclass(frozen=True)
class CostScenario:
    """Per-class labelling costs, in budget units per label."""

    cost_benign: float
    cost_malicious: float
    name: str = "custom"

    def __post_init__(self):
        if not (self.cost_benign > 0 and self.cost_malicious > 0):
            raise ValueError(f"scenario {self.name!r}: labelling costs must be positive")

    def cost_of(self, label: int) -> float:
        return self.cost_malicious if label == MALICIOUS else self.cost_benign


BALANCED = CostScenario(1.0, 1.0, "balanced")
UNBALANCED = CostScenario(1.0, 2.0, "unbalanced")
VERY_UNBALANCED = CostScenario(1.0, 5.0, "very_unbalanced")
SCENARIOS = {s.name: s for s in (BALANCED, UNBALANCED, VERY_UNBALANCED)}


@dataclass(frozen=True)
class PartitionSpec:
    budget: float
    min_benign: int
    cost_scenario: CostScenario
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.min_benign < 0:
            raise ValueError("min_benign must be nonnegative")


class BudgetLedger:
    """Tracks verified-label spending against the labelling budget.

    Arithmetic is exact (rationals built from the float inputs), so a ledger
    that is spent down to its total compares equal to it.
    """

    def __init__(self, total: float | Fraction):
        self.total = Fraction(total)
        self.entries: list[tuple[str, int, Fraction]] = []

    def __repr__(self) -> str:
        return f"BudgetLedger(total={float(self.total):g}, spent={float(self.spent):g})"

    @property
    def spent(self) -> Fraction:
        return sum((amount for _, _, amount in self.entries), Fraction(0))

    @property
    def residual(self) -> Fraction:
        return self.total - self.spent

    def affords(self, amount: float | Fraction) -> bool:
        return Fraction(amount) <= self.residual

    def debit(self, what: str, count: int, amount: float | Fraction) -> None:
        amount = Fraction(amount)
        if amount < 0:
            raise ValueError("negative debit")
        if amount > self.residual:
            raise InsufficientBudget(
                f"{what}: debit {float(amount):g} exceeds residual budget {float(self.residual):g}")
        self.entries.append((what, int(count), amount))

    @property
    def verified_labels(self) -> int:
        return sum(count for _, count, _ in self.entries)


# -- CSV ingestion -----------------------------------------------------------

def load_csv(path, label_column: str = "label", *, name: str | None = None,
             require_both_classes: bool = False) -> LabeledDataset:
    """Read a header-first CSV of numeric features plus a 0/1 label column."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ParseError(0, label_column, "label column missing from header")
        label_at = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_at]
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(r, "*", f"expected {len(header)} cells, found {len(row)}")
            feats = []
            for c in feature_cols:
                feats.append(_parse_feature(row[c], r, header[c]))
            rows.append(feats)
            labels.append(_parse_label(row[label_at], r, label_column))
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_cols))
    d = LabeledDataset(X, np.array(labels), np.arange(len(rows)), name or path.stem)
    if require_both_classes:
        check_both_classes(d)
    return d


def _parse_feature(cell: str, row: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(row, column, f"{cell!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(row, column, f"{cell!r} is not finite")
    return v


def _parse_label(cell: str, row: int, column: str) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(row, column, f"label {cell!r} is not 0 or 1") from None
    if v not in (0.0, 1.0):
        raise ParseError(row, column, f"label {cell!r} is not 0 or 1")
    return int(v)


def check_both_classes(d: LabeledDataset) -> None:
    if len(d) == 0:
        raise EmptyDataset(f"{d.name}: empty")
    for label in (BENIGN, MALICIOUS):
        if d.count(label) == 0:
            raise SingleClassDataset(f"{d.name}: no {CLASS_NAMES[label]} samples")


def write_csv(d: LabeledDataset, path, label_column: str = "label",
              feature_names: Sequence[str] | None = None) -> Path:
    path = Path(path)
    names = list(feature_names) if feature_names else [f"f{j}" for j in range(d.dim)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label_column])
        for x, label in zip(d.X, d.y):
            w.writerow([repr(float(v)) for v in x] + [int(label)])
    return path


# -- Prepare stage -------------------------------------------------------------

def _stratum(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 1e-9))


def split_future(d: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator,
                 min_per_class: int = 5) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified hold-out: ``floor(test_fraction * n_c)`` of each class to the future set."""
    future_pos = []
    for label in (BENIGN, MALICIOUS):
        pos = np.flatnonzero(d.y == label)
        if len(pos) < min_per_class:
            raise TooFewSamples(label, len(pos), min_per_class)
        n_test = _stratum(spec.test_fraction, len(pos))
        future_pos.append(rng.permutation(pos)[:n_test])
    mask = np.zeros(len(d), dtype=bool)
    mask[np.concatenate(future_pos)] = True
    future = d.take(np.flatnonzero(mask), name=f"{d.name}:future")
    trainpool = d.take(np.flatnonzero(~mask), name=f"{d.name}:trainpool")
    return future, trainpool


def affordable_malicious(budget: Fraction, n_benign: int, scenario: CostScenario) -> int:
    """Largest malicious count the budget covers after ``n_benign`` benign labels."""
    residual = budget - n_benign * Fraction(scenario.cost_benign)
    if residual < 0:
        return -1
    return int(residual // Fraction(scenario.cost_malicious))


def compose_labelled(trainpool: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator
                     ) -> tuple[LabeledDataset, UnlabeledPool, BudgetLedger]:
    """Draw the labelled set under the budget; everything else becomes unlabelled.

    ``min_benign`` benign labels are bought first, then malicious labels until
    the residual budget no longer covers one.
    """
    scenario = spec.cost_scenario
    budget = Fraction(spec.budget)
    n_mal = affordable_malicious(budget, spec.min_benign, scenario)
    if budget <= 0 or n_mal < 1:
        raise InsufficientBudget(
            f"budget {spec.budget:g} cannot cover {spec.min_benign} benign labels "
            f"plus one malicious label under scenario {scenario.name!r}")
    benign_pos = np.flatnonzero(trainpool.y == BENIGN)
    mal_pos = np.flatnonzero(trainpool.y == MALICIOUS)
    if len(benign_pos) < spec.min_benign:
        raise PoolExhausted(BENIGN, len(benign_pos), spec.min_benign)
    if len(mal_pos) < n_mal:
        raise PoolExhausted(MALICIOUS, len(mal_pos), n_mal)

    ledger = BudgetLedger(budget)
    chosen_b = rng.permutation(benign_pos)[: spec.min_benign]
    ledger.debit("benign", len(chosen_b), len(chosen_b) * Fraction(scenario.cost_benign))
    chosen_m = rng.permutation(mal_pos)[:n_mal]
    ledger.debit("malicious", len(chosen_m), len(chosen_m) * Fraction(scenario.cost_malicious))

    mask = np.zeros(len(trainpool), dtype=bool)
    mask[chosen_b] = True
    mask[chosen_m] = True
    labelled = trainpool.take(np.flatnonzero(mask), name=f"{trainpool.name}:labelled")
    rest = trainpool.take(np.flatnonzero(~mask))
    return labelled, UnlabeledPool.from_dataset(rest), ledger


def labelling_cost(d: LabeledDataset, scenario: CostScenario) -> Fraction:
    return (d.count(BENIGN) * Fraction(scenario.cost_benign)
            + d.count(MALICIOUS) * Fraction(scenario.cost_malicious))
