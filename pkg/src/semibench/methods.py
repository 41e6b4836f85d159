"""The two supervised baselines and the nine semisupervised pipelines.

Every pipeline receives the same labelled set, unlabelled pool and future
set, spends at most the labelling budget on verified labels, and touches the
future set only for the final evaluation. Training sets are always ordered
by sample id before fitting, so two pipelines that assemble the same set
train the same model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .dataset import (BENIGN, MALICIOUS, BudgetLedger, CostScenario, LabeledDataset,
                      PoolExhausted, TooFewSamples, UnlabeledPool, labelling_cost)
from .learner import ForestLearner, Learner, LearnerConfig, Model, Predictions
from .seeding import derive_seed, stream
from .stats import ConfusionCounts, Metrics, mean_metrics, metrics
from .timing import Stopwatch

PSEUDO_THRESHOLD = 0.99
ACTIVE_REPEATS = 5


class Kind(str, Enum):
    SL_LOWER = "SL"
    SL_UPPER = "SL_upper"
    VANILLA = "SsL_vanilla"
    PSEUDO = "pi"
    PSEUDO_ITERATED = "pi_hat"
    ACTIVE = "alpha"
    PSEUDO_ACTIVE = "alpha_pi"


@dataclass(frozen=True)
class Band:
    """Confidence interval selecting active-learning candidates."""

    name: str
    lo: float
    hi: float
    lo_inclusive: bool = True
    hi_inclusive: bool = True

    def contains(self, confidence) -> np.ndarray:
        c = np.asarray(confidence)
        above = c >= self.lo if self.lo_inclusive else c > self.lo
        below = c <= self.hi if self.hi_inclusive else c < self.hi
        return above & below


LOW = Band("l", 0.0, 0.01)
OTHER = Band("o", 0.01, 0.99, lo_inclusive=False, hi_inclusive=False)
HIGH = Band("h", 0.99, 1.0)
FULL = Band("full", 0.0, 1.0)
BANDS = {b.name: b for b in (LOW, OTHER, HIGH)}


@dataclass(frozen=True)
class MethodSpec:
    kind: Kind
    band: Band | None = None
    pseudo_threshold: float = PSEUDO_THRESHOLD
    active_repeats: int = ACTIVE_REPEATS

    def __post_init__(self):
        if self.is_active != (self.band is not None):
            raise ValueError(f"{self.kind.value}: a band is required exactly for active kinds")
        if self.active_repeats < 1:
            raise ValueError("active_repeats must be >= 1")

    @property
    def is_active(self) -> bool:
        return self.kind in (Kind.ACTIVE, Kind.PSEUDO_ACTIVE)

    @property
    def is_pseudo(self) -> bool:
        return self.kind in (Kind.VANILLA, Kind.PSEUDO, Kind.PSEUDO_ITERATED)

    @property
    def id(self) -> str:
        if self.band is None:
            return self.kind.value
        return f"{self.kind.value}_{self.band.name}"

    def __str__(self) -> str:
        return self.id

    @classmethod
    def parse(cls, name: str) -> "MethodSpec":
        name = name.strip()
        for kind in (Kind.PSEUDO_ACTIVE, Kind.ACTIVE):
            prefix = kind.value + "_"
            if name.startswith(prefix) and name[len(prefix):] in BANDS:
                return cls(kind, BANDS[name[len(prefix):]])
        try:
            kind = Kind(name)
        except ValueError:
            raise ValueError(f"unknown method {name!r}; expected one of "
                             f"{', '.join(m.id for m in ALL_METHODS)}") from None
        return cls(kind)


SL_LOWER = MethodSpec(Kind.SL_LOWER)
SL_UPPER = MethodSpec(Kind.SL_UPPER)
VANILLA = MethodSpec(Kind.VANILLA)
BASELINES = (SL_LOWER, SL_UPPER, VANILLA)
ALL_METHODS = BASELINES + (
    MethodSpec(Kind.PSEUDO),
    MethodSpec(Kind.PSEUDO_ITERATED),
    *(MethodSpec(Kind.ACTIVE, b) for b in (LOW, OTHER, HIGH)),
    *(MethodSpec(Kind.PSEUDO_ACTIVE, b) for b in (LOW, OTHER, HIGH)),
)


@dataclass
class MethodOutcome:
    metrics: Metrics
    epsilon_ms: float
    train_size: int
    n_verified: int
    n_pseudo: int
    spent: Fraction | None = None
    flags: tuple[str, ...] = ()
    repeats: list["MethodOutcome"] = field(default_factory=list)
    audit: dict = field(default_factory=dict)

    def __iter__(self):
        # (metrics, epsilon) unpacking
        return iter((self.metrics, self.epsilon_ms))


# -- helpers -------------------------------------------------------------------

class _TrainingSet:
    """Rows assembled from the labelled set and the unlabelled pool."""

    def __init__(self, base: LabeledDataset):
        self.parts_X = [base.X]
        self.parts_y = [base.y]
        self.parts_ids = [base.ids]

    def add(self, X, y, ids) -> "_TrainingSet":
        out = _TrainingSet.__new__(_TrainingSet)
        out.parts_X = self.parts_X + [X]
        out.parts_y = self.parts_y + [np.asarray(y, dtype=np.int64)]
        out.parts_ids = self.parts_ids + [ids]
        return out

    def arrays(self):
        ids = np.concatenate(self.parts_ids)
        order = np.argsort(ids, kind="stable")
        return np.concatenate(self.parts_X)[order], np.concatenate(self.parts_y)[order], ids[order]

    def __len__(self) -> int:
        return sum(len(i) for i in self.parts_ids)


def as_learner(cfg: LearnerConfig | Learner | None) -> Learner:
    if cfg is None:
        return ForestLearner()
    if isinstance(cfg, LearnerConfig):
        return ForestLearner(cfg)
    return cfg


def _fit(learner: Learner, train: _TrainingSet) -> Model:
    X, y, _ = train.arrays()
    return learner.fit(X, y)


def evaluate(model: Model, future: LabeledDataset) -> Metrics:
    pred = model.predict(future.X)
    return metrics(ConfusionCounts.from_labels(future.y, pred.labels))


# -- supervised baselines --------------------------------------------------------

def run_sl_lower(L: LabeledDataset, F: LabeledDataset, cfg=None) -> MethodOutcome:
    learner = as_learner(cfg)
    sw = Stopwatch()
    with sw.running():
        model = _fit(learner, _TrainingSet(L))
        m = evaluate(model, F)
    return MethodOutcome(m, sw.ms, len(L), len(L), 0)


def run_sl_upper(Lbar: LabeledDataset, F: LabeledDataset, cfg=None) -> MethodOutcome:
    """Upper bound: every pool sample with its true label."""
    out = run_sl_lower(Lbar, F, cfg)
    out.n_verified = len(Lbar)
    return out


# -- pseudo labelling --------------------------------------------------------------

def _admit(pred: Predictions, threshold: float) -> np.ndarray:
    return np.flatnonzero(pred.confidence >= threshold)


def run_vanilla_ssl(L: LabeledDataset, U: UnlabeledPool, F: LabeledDataset, cfg=None) -> MethodOutcome:
    """Pseudo-label all of the pool regardless of confidence, then retrain."""
    return _run_pseudo_stage(L, U, F, cfg, threshold=None)


def run_pseudo(L: LabeledDataset, U: UnlabeledPool, F: LabeledDataset, cfg=None,
               threshold: float = PSEUDO_THRESHOLD) -> MethodOutcome:
    return _run_pseudo_stage(L, U, F, cfg, threshold=threshold)


def _run_pseudo_stage(L, U, F, cfg, threshold: float | None) -> MethodOutcome:
    if len(U) == 0:
        raise ValueError("unlabelled pool is empty")
    learner = as_learner(cfg)
    sw = Stopwatch()
    with sw.running():
        base = _TrainingSet(L)
        model = _fit(learner, base)
        pred = model.predict(U.features)
        admitted = np.arange(len(U)) if threshold is None else _admit(pred, threshold)
        if len(admitted):
            mixed = base.add(U.features[admitted], pred.labels[admitted], U.ids[admitted])
            model = _fit(learner, mixed)
        m = evaluate(model, F)
    return MethodOutcome(m, sw.ms, len(L) + len(admitted), len(L), len(admitted),
                         audit={"admitted_ids": U.ids[admitted],
                                "pseudo_labels": pred.labels[admitted]})


def run_pseudo_iterated(L: LabeledDataset, U: UnlabeledPool, F: LabeledDataset, cfg=None,
                        threshold: float = PSEUDO_THRESHOLD) -> MethodOutcome:
    """Two pseudo-labelling rounds; the second only sees never-admitted samples."""
    if len(U) == 0:
        raise ValueError("unlabelled pool is empty")
    learner = as_learner(cfg)
    sw = Stopwatch()
    with sw.running():
        base = _TrainingSet(L)
        model = _fit(learner, base)
        pred = model.predict(U.features)
        first = _admit(pred, threshold)
        mixed = base
        if len(first):
            mixed = base.add(U.features[first], pred.labels[first], U.ids[first])
            model = _fit(learner, mixed)
        remainder = np.setdiff1d(np.arange(len(U)), first)
        second = remainder[:0]
        if len(remainder):
            pred2 = model.predict(U.features[remainder])
            second = remainder[_admit(pred2, threshold)]
            if len(second):
                labels2 = pred2.labels[np.searchsorted(remainder, second)]
                mixed = mixed.add(U.features[second], labels2, U.ids[second])
                model = _fit(learner, mixed)
        m = evaluate(model, F)
    n_pseudo = len(first) + len(second)
    return MethodOutcome(m, sw.ms, len(L) + n_pseudo, len(L), n_pseudo,
                         audit={"admitted_ids": U.ids[first], "admitted2_ids": U.ids[second]})


# -- active learning ---------------------------------------------------------------

class Halving(NamedTuple):
    half: LabeledDataset
    restored_budget: Fraction
    removed: LabeledDataset


def halve_labelled(L: LabeledDataset, scenario: CostScenario, rng: np.random.Generator) -> Halving:
    """Drop half of each class (floored) at random, refunding their labelling cost."""
    removed = []
    for label in (BENIGN, MALICIOUS):
        pos = np.flatnonzero(L.y == label)
        if len(pos) < 2:
            raise TooFewSamples(label, len(pos), 2)
        removed.append(rng.permutation(pos)[: len(pos) // 2])
    mask = np.zeros(len(L), dtype=bool)
    mask[np.concatenate(removed)] = True
    gone = L.take(np.flatnonzero(mask))
    return Halving(L.take(np.flatnonzero(~mask)), labelling_cost(gone, scenario), gone)


def _oracle_draw(confidence: np.ndarray, band: Band, q: int, rng: np.random.Generator,
                 eligible: np.ndarray) -> tuple[np.ndarray, bool]:
    """Pick ``q`` eligible positions in ``band``; top up at random if the band runs dry."""
    in_band = band.contains(confidence)
    cands = eligible[in_band]
    if len(cands) >= q:
        return rng.permutation(cands)[:q], False
    others = eligible[~in_band]
    fill = rng.permutation(others)[: q - len(cands)]
    return np.concatenate([cands, fill]), True


def run_active(L: LabeledDataset, U: UnlabeledPool, F: LabeledDataset, cfg, band: Band,
               scenario: CostScenario, seed: int, budget: float | Fraction | None = None,
               repeats: int = ACTIVE_REPEATS) -> MethodOutcome:
    """Uncertainty-sampling active learning with half of the labelling budget held back."""
    return _run_active(L, U, F, cfg, band, scenario, seed, budget, repeats, pseudo_threshold=None)


def run_pseudo_active(L: LabeledDataset, U: UnlabeledPool, F: LabeledDataset, cfg, band: Band,
                      scenario: CostScenario, seed: int, budget: float | Fraction | None = None,
                      repeats: int = ACTIVE_REPEATS,
                      threshold: float = PSEUDO_THRESHOLD) -> MethodOutcome:
    """Active learning on top of a pseudo-labelled support model."""
    return _run_active(L, U, F, cfg, band, scenario, seed, budget, repeats, pseudo_threshold=threshold)


def _run_active(L, U, F, cfg, band, scenario, seed, budget, repeats, pseudo_threshold):
    learner = as_learner(cfg)
    total = labelling_cost(L, scenario) if budget is None else Fraction(budget)
    halving = halve_labelled(L, scenario, stream(derive_seed(seed, "halve")))
    half = halving.half
    q = len(L) - len(half)
    if len(U) < q:
        raise PoolExhausted(None, len(U), q)

    shared = Stopwatch()
    with shared.running():
        base = _TrainingSet(half)
        support = _fit(learner, base)
        pred = support.predict(U.features)
        admitted = np.arange(0)
        pseudo_labels = np.arange(0)
        eligible = np.arange(len(U))
        conf = pred.confidence
        if pseudo_threshold is not None:
            admitted = _admit(pred, pseudo_threshold)
            pseudo_labels = pred.labels[admitted]
            if len(admitted):
                support_pi = _fit(learner, base.add(U.features[admitted], pseudo_labels, U.ids[admitted]))
                eligible = np.setdiff1d(eligible, admitted)
                conf = support_pi.predict(U.features[eligible]).confidence if len(eligible) else conf[:0]

    outcomes = []
    for r in range(repeats):
        rs = stream(derive_seed(seed, "repeat", r))
        flags = []
        own = Stopwatch()
        with own.running():
            keep = np.ones(len(admitted), dtype=bool)
            if len(eligible) >= q:
                chosen, exhausted = _oracle_draw(conf, band, q, rs, eligible)
            else:
                # pseudo labels used most of the pool: upgrade some to verified
                promoted = rs.permutation(len(admitted))[: q - len(eligible)]
                keep[promoted] = False
                chosen = np.concatenate([eligible, admitted[promoted]])
                exhausted = True
                flags.append("pool_exhausted")
            if exhausted:
                flags.append("band_exhausted")
            truth = U.oracle(chosen)
            train = base
            if keep.any():
                kept = admitted[keep]
                train = train.add(U.features[kept], pseudo_labels[keep], U.ids[kept])
            train = train.add(U.features[chosen], truth, U.ids[chosen])
            model = _fit(learner, train)
            m = evaluate(model, F)
        ledger = BudgetLedger(total)
        ledger.debit("labelled_half", len(half), labelling_cost(half, scenario))
        leftover = ledger.residual
        ledger.debit("suggested", q, leftover)
        n_pseudo = int(keep.sum())
        outcomes.append(MethodOutcome(
            m, shared.ms + own.ms, len(train), len(half) + q, n_pseudo, ledger.spent, tuple(flags),
            audit={"oracle_ids": U.ids[chosen], "oracle_labels": truth,
                   "pseudo_ids": U.ids[admitted[keep]], "unit_cost": leftover / q,
                   "ledger": ledger}))

    agg_flags = tuple(sorted({f for o in outcomes for f in o.flags}))
    return MethodOutcome(
        mean_metrics([o.metrics for o in outcomes]),
        sum(o.epsilon_ms for o in outcomes) / len(outcomes),
        outcomes[0].train_size, outcomes[0].n_verified,
        outcomes[0].n_pseudo, outcomes[0].spent, agg_flags, outcomes,
        audit={"restored_budget": halving.restored_budget, "half_size": len(half), "q": q,
               "pseudo_admitted": len(admitted)})


def run_method(spec: MethodSpec, L: LabeledDataset, U: UnlabeledPool, Lbar: LabeledDataset,
               F: LabeledDataset, cfg, scenario: CostScenario, seed: int,
               budget: float | Fraction | None = None) -> MethodOutcome:
    """Dispatch one method on a prepared run."""
    k = spec.kind
    if k is Kind.SL_LOWER:
        return run_sl_lower(L, F, cfg)
    if k is Kind.SL_UPPER:
        return run_sl_upper(Lbar, F, cfg)
    if k is Kind.VANILLA:
        return run_vanilla_ssl(L, U, F, cfg)
    if k is Kind.PSEUDO:
        return run_pseudo(L, U, F, cfg, spec.pseudo_threshold)
    if k is Kind.PSEUDO_ITERATED:
        return run_pseudo_iterated(L, U, F, cfg, spec.pseudo_threshold)
    if k is Kind.ACTIVE:
        return run_active(L, U, F, cfg, spec.band, scenario, seed, budget, spec.active_repeats)
    return run_pseudo_active(L, U, F, cfg, spec.band, scenario, seed, budget,
                             spec.active_repeats, spec.pseudo_threshold)
