"""Campaign orchestration: the (k, n) loop over every budget and cost scenario.

A campaign repeats the whole workflow for each (budget, scenario) pair. For
each pair, ``k`` future sets are drawn and, for each of them, ``n`` labelled
sets. One such draw is a *task*: every configured method runs on the same
labelled set, unlabelled pool and future set.

All randomness is derived from the master seed and the task coordinates, so
results do not depend on the number of workers or on scheduling order.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .dataset import (BENIGN, MALICIOUS, CostScenario, DatasetError, LabeledDataset, PartitionSpec,
                      UnlabeledPool, affordable_malicious, check_both_classes, class_ratio,
                      compose_labelled, load_csv, split_future)
from .learner import LearnerConfig, LearnerError, warm_up
from .methods import Kind, MethodOutcome, MethodSpec, run_method
from .seeding import derive_seed, stream
from .synth import SynthSpec, generate
from .timing import measure_epsilon  # noqa: F401  re-exported

WORKERS_ENV = "SEMIBENCH_WORKERS"


class ConfigError(ValueError):
    """Invalid campaign configuration; the message names the field or requirement."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


# each baseline enforces one evaluation requirement
REQUIRED_BASELINES = (
    (Kind.SL_LOWER, "R1", "the supervised lower bound SL trained on the labelled set alone"),
    (Kind.VANILLA, "R2", "vanilla SsL admitting every pseudo label"),
    (Kind.SL_UPPER, "R3", "the supervised upper bound SL_upper trained on the fully labelled pool"),
)


def default_min_benign(budget: float, scenario: CostScenario) -> int:
    """Half of the budget buys benign labels."""
    return int(Fraction(budget) / (2 * Fraction(scenario.cost_benign)))


@dataclass(frozen=True)
class CampaignConfig:
    methods: tuple[MethodSpec, ...]
    budgets: tuple[float, ...]
    scenarios: tuple[CostScenario, ...]
    n: int = 1
    k: int = 1
    dataset: Path | None = None
    synth: SynthSpec | None = None
    label_column: str = "label"
    min_benign: dict = field(default_factory=dict)  # {(budget, scenario name): count}
    test_fraction: float = 0.2
    learner: LearnerConfig = LearnerConfig()
    master_seed: int = 0
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(
            m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods))
        object.__setattr__(self, "budgets", tuple(self.budgets))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.dataset is not None:
            object.__setattr__(self, "dataset", Path(self.dataset))

    def validate(self) -> "CampaignConfig":
        if self.n < 1:
            raise ConfigError("n", "inner repetitions must be >= 1")
        if self.k < 1:
            raise ConfigError("k", "outer repetitions must be >= 1")
        if not self.budgets:
            raise ConfigError("budgets", "at least one labelling budget is required")
        if not self.scenarios:
            raise ConfigError("scenarios", "at least one cost scenario is required")
        if not self.methods:
            raise ConfigError("methods", "no methods configured")
        kinds = {m.kind for m in self.methods}
        for kind, req, what in REQUIRED_BASELINES:
            if kind not in kinds:
                raise ConfigError("methods", f"requirement {req} violated: {what} ({kind.value}) is missing")
        ids = [m.id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise ConfigError("methods", "duplicate method")
        if (self.dataset is None) == (self.synth is None):
            raise ConfigError("dataset", "exactly one of a dataset path or a synthetic spec is required")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction", "must lie in (0, 1)")
        if len({s.name for s in self.scenarios}) != len(self.scenarios):
            raise ConfigError("scenarios", "duplicate scenario name")
        if len(set(self.budgets)) != len(self.budgets):
            raise ConfigError("budgets", "duplicate budget")
        for b in self.budgets:
            if not (isinstance(b, (int, float)) and math.isfinite(b) and b > 0):
                raise ConfigError("budgets", f"budget {b!r} must be a positive number")
            for s in self.scenarios:
                mb = self.min_benign_for(b, s)
                n_mal = affordable_malicious(Fraction(b), mb, s)
                if n_mal < 1:
                    raise ConfigError(
                        "min_benign", f"budget {b:g} / {s.name}: {mb} benign labels leave no room "
                        "for a malicious label")
                # halving for active learning needs two samples of each class
                if any(m.is_active for m in self.methods) and min(mb, n_mal) < 2:
                    raise ConfigError(
                        "min_benign", f"budget {b:g} / {s.name}: active methods need at least 2 labels "
                        f"per class, composition gives {mb} benign and {n_mal} malicious")
        return self

    def min_benign_for(self, budget: float, scenario: CostScenario) -> int:
        key = (budget, scenario.name)
        if key in self.min_benign:
            return int(self.min_benign[key])
        return default_min_benign(budget, scenario)

    def load_data(self) -> LabeledDataset:
        if self.synth is not None:
            return generate(self.synth, self.name)
        d = load_csv(self.dataset, self.label_column, name=self.name)
        check_both_classes(d)
        return d

    @property
    def runs_per_method(self) -> int:
        return self.n * self.k * len(self.budgets) * len(self.scenarios)


# -- records -----------------------------------------------------------------------

@dataclass
class RunRecord:
    method: str
    status: str
    budget: float
    scenario: str
    cost_benign: float
    cost_malicious: float
    k_index: int
    n_index: int
    repeats: int
    f1: float
    precision: float
    recall: float
    epsilon_ms: float
    size_L: int
    size_U: int
    size_Lbar: int
    size_F: int
    L_benign: int
    L_malicious: int
    U_benign: int
    U_malicious: int
    Lbar_benign: int
    Lbar_malicious: int
    F_benign: int
    F_malicious: int
    ratio_L: str
    ratio_U: str
    ratio_Lbar: str
    ratio_F: str
    train_size: int
    n_verified: int
    n_pseudo: int
    spent: Fraction
    flags: str
    error: str
    seed_trace: str


@dataclass
class RepeatRecord:
    method: str
    budget: float
    scenario: str
    k_index: int
    n_index: int
    repeat_index: int
    f1: float
    precision: float
    recall: float
    epsilon_ms: float
    train_size: int
    n_pseudo: int
    spent: Fraction
    flags: str
    seed: int


RESULT_COLUMNS = [f.name for f in fields(RunRecord)]
REPEAT_COLUMNS = [f.name for f in fields(RepeatRecord)]
EPSILON_COLUMNS = ("epsilon_ms",)


@dataclass
class Cell:
    """One prepared draw of the future, labelled and unlabelled sets."""

    budget: float
    scenario: CostScenario
    k_index: int
    n_index: int
    F: LabeledDataset
    Lbar: LabeledDataset
    L: LabeledDataset
    U: UnlabeledPool
    spent: Fraction
    seeds: dict


def cell_seeds(cfg: CampaignConfig, budget: float, scenario: CostScenario, k: int, n: int) -> dict:
    m = cfg.master_seed
    return {
        "future": derive_seed(m, "future", budget, scenario.name, k),
        "labelled": derive_seed(m, "labelled", budget, scenario.name, k, n),
        "learner": derive_seed(m, "learner", budget, scenario.name, k, n),
    }


def prepare_cell(data: LabeledDataset, cfg: CampaignConfig, budget: float, scenario: CostScenario,
                 k: int, n: int) -> Cell:
    seeds = cell_seeds(cfg, budget, scenario, k, n)
    spec = PartitionSpec(budget, cfg.min_benign_for(budget, scenario), scenario, cfg.test_fraction)
    F, Lbar = split_future(data, spec, stream(seeds["future"]))
    L, U, ledger = compose_labelled(Lbar, spec, stream(seeds["labelled"]))
    return Cell(budget, scenario, k, n, F, Lbar, L, U, ledger.spent, seeds)


def _sizes(cell: Cell | None) -> dict:
    if cell is None:
        zero = {f"size_{s}": 0 for s in ("L", "U", "Lbar", "F")}
        zero.update({f"{s}_{c}": 0 for s in ("L", "U", "Lbar", "F") for c in ("benign", "malicious")})
        zero.update({f"ratio_{s}": "" for s in ("L", "U", "Lbar", "F")})
        return zero
    out = {}
    for tag, d in (("L", cell.L), ("U", cell.U), ("Lbar", cell.Lbar), ("F", cell.F)):
        out[f"size_{tag}"] = len(d)
        out[f"{tag}_benign"] = d.count(BENIGN)
        out[f"{tag}_malicious"] = d.count(MALICIOUS)
        out[f"ratio_{tag}"] = str(class_ratio(d)) if len(d) else ""
    return out


def method_seed(cfg: CampaignConfig, budget: float, scenario: CostScenario, k: int, n: int,
                method: MethodSpec) -> int:
    return derive_seed(cfg.master_seed, "method", budget, scenario.name, k, n, method.id)


def _trace(seeds: dict, extra: int | None) -> str:
    parts = [f"{k}={v}" for k, v in seeds.items()]
    if extra is not None:
        parts.append(f"method={extra}")
    return ";".join(parts)


def run_task(data: LabeledDataset, cfg: CampaignConfig, budget: float, scenario: CostScenario,
             k: int, n: int) -> tuple[list[RunRecord], list[RepeatRecord]]:
    """Run every configured method on one (budget, scenario, k, n) draw."""
    base = dict(budget=budget, scenario=scenario.name, cost_benign=scenario.cost_benign,
                cost_malicious=scenario.cost_malicious, k_index=k, n_index=n)
    seeds = cell_seeds(cfg, budget, scenario, k, n)
    try:
        cell = prepare_cell(data, cfg, budget, scenario, k, n)
    except DatasetError as e:
        return [_failed(m, base, None, seeds, None, e) for m in cfg.methods], []

    learner_cfg = cfg.learner.with_seed(seeds["learner"])
    records, repeats = [], []
    for m in cfg.methods:
        mseed = method_seed(cfg, budget, scenario, k, n, m) if m.is_active else None
        try:
            out = run_method(m, cell.L, cell.U, cell.Lbar, cell.F, learner_cfg, scenario,
                             mseed, budget=budget)
        except (DatasetError, LearnerError, ValueError) as e:
            records.append(_failed(m, base, cell, seeds, mseed, e))
            continue
        records.append(_record(m, base, cell, seeds, mseed, out))
        for r, rep in enumerate(out.repeats):
            repeats.append(RepeatRecord(
                m.id, budget, scenario.name, k, n, r, rep.metrics.f1, rep.metrics.precision,
                rep.metrics.recall, rep.epsilon_ms, rep.train_size, rep.n_pseudo, rep.spent,
                "|".join(rep.flags), derive_seed(mseed, "repeat", r)))
    return records, repeats


def _record(m: MethodSpec, base: dict, cell: Cell, seeds: dict, mseed, out: MethodOutcome) -> RunRecord:
    spent = out.spent if out.spent is not None else cell.spent
    return RunRecord(method=m.id, status="ok", **base, repeats=max(1, len(out.repeats)),
                     f1=out.metrics.f1, precision=out.metrics.precision, recall=out.metrics.recall,
                     epsilon_ms=out.epsilon_ms, **_sizes(cell), train_size=out.train_size,
                     n_verified=out.n_verified, n_pseudo=out.n_pseudo, spent=spent,
                     flags="|".join(out.flags), error="", seed_trace=_trace(seeds, mseed))


def _failed(m: MethodSpec, base: dict, cell: Cell | None, seeds: dict, mseed, err: Exception) -> RunRecord:
    return RunRecord(method=m.id, status="failed", **base, repeats=0, f1=0.0, precision=0.0,
                     recall=0.0, epsilon_ms=0.0, **_sizes(cell), train_size=0, n_verified=0,
                     n_pseudo=0, spent=cell.spent if cell else Fraction(0), flags="",
                     error=f"{type(err).__name__}: {err}", seed_trace=_trace(seeds, mseed))


# -- campaign ------------------------------------------------------------------------

@dataclass
class CampaignResult:
    config: CampaignConfig
    records: list[RunRecord]
    repeats: list[RepeatRecord]
    dataset_name: str
    dataset_size: int

    def by_method(self, method: str) -> list[RunRecord]:
        return [r for r in self.records if r.method == str(method)]

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.records if r.status != "ok"]


_WORKER_DATA: dict = {}


def _init_worker(data: LabeledDataset, cfg: CampaignConfig):
    _WORKER_DATA["data"] = data
    _WORKER_DATA["cfg"] = cfg
    warm_up()


def _run_in_worker(task):
    budget, scenario, k, n = task
    return run_task(_WORKER_DATA["data"], _WORKER_DATA["cfg"], budget, scenario, k, n)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"{raw!r} is not an integer") from None
    if w < 1:
        raise ConfigError(WORKERS_ENV, "must be >= 1")
    return w


def tasks(cfg: CampaignConfig) -> list[tuple]:
    return [(b, s, k, n) for b in cfg.budgets for s in cfg.scenarios
            for k in range(cfg.k) for n in range(cfg.n)]


def run_cell(data: LabeledDataset, cfg: CampaignConfig, budget: float, scenario: CostScenario
             ) -> tuple[list[RunRecord], list[RepeatRecord]]:
    """All n * k runs of every method for one (budget, scenario) pair."""
    warm_up()
    records, repeats = [], []
    for k in range(cfg.k):
        for n in range(cfg.n):
            r, p = run_task(data, cfg, budget, scenario, k, n)
            records += r
            repeats += p
    return _sorted(cfg, records, repeats)


def _sorted(cfg: CampaignConfig, records, repeats):
    mi = {m.id: i for i, m in enumerate(cfg.methods)}
    bi = {b: i for i, b in enumerate(cfg.budgets)}
    si = {s.name: i for i, s in enumerate(cfg.scenarios)}

    def key(r):
        return (mi[r.method], bi[r.budget], si[r.scenario], r.k_index, r.n_index,
                getattr(r, "repeat_index", 0))
    return sorted(records, key=key), sorted(repeats, key=key)


def check_sizes(cfg: CampaignConfig, data: LabeledDataset) -> list[str]:
    """Warnings for budgets whose labelled set would not be smaller than the future set."""
    notes = []
    for b in cfg.budgets:
        for s in cfg.scenarios:
            mb = cfg.min_benign_for(b, s)
            size_L = mb + affordable_malicious(Fraction(b), mb, s)
            size_F = sum(int(math.floor(cfg.test_fraction * data.count(c) + 1e-9)) for c in (BENIGN, MALICIOUS))
            if size_L >= size_F:
                notes.append(f"budget {b:g} / {s.name}: labelled set ({size_L}) is not smaller "
                             f"than the future set ({size_F})")
    return notes


def run_campaign(cfg: CampaignConfig, data: LabeledDataset | None = None,
                 workers: int | None = None) -> CampaignResult:
    cfg.validate()
    if data is None:
        data = cfg.load_data()
    for note in check_sizes(cfg, data):
        warnings.warn(note, stacklevel=2)
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    todo = tasks(cfg)
    records, repeats = [], []
    if workers == 1 or len(todo) == 1:
        warm_up()
        for b, s, k, n in todo:
            r, p = run_task(data, cfg, b, s, k, n)
            records += r
            repeats += p
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(todo)), initializer=_init_worker,
                                 initargs=(data, cfg)) as pool:
            for r, p in pool.map(_run_in_worker, todo, chunksize=1):
                records += r
                repeats += p
    records, repeats = _sorted(cfg, records, repeats)
    return CampaignResult(cfg, records, repeats, data.name, len(data))


# -- CSV I/O ----------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, Fraction):
        return repr(float(v)) if v.denominator != 1 else str(v.numerator)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(rows, columns: Sequence[str], path, drop: Sequence[str] = ()) -> Path:
    path = Path(path)
    cols = [c for c in columns if c not in drop]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            d = asdict(r)
            w.writerow([_cell(d[c]) for c in cols])
    return path


def write_results(records: Sequence[RunRecord], path, drop_epsilon: bool = False) -> Path:
    return _write(records, RESULT_COLUMNS, path, EPSILON_COLUMNS if drop_epsilon else ())


def write_repeats(repeats: Sequence[RepeatRecord], path, drop_epsilon: bool = False) -> Path:
    return _write(repeats, REPEAT_COLUMNS, path, EPSILON_COLUMNS if drop_epsilon else ())


def read_results(path) -> list[dict]:
    """Rows of a results CSV as dicts with numeric fields converted."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"results file not found: {path}")
    ints = {"k_index", "n_index", "repeats", "train_size", "n_verified", "n_pseudo"}
    floats = {"budget", "f1", "precision", "recall", "epsilon_ms", "cost_benign", "cost_malicious"}
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"method", "scenario", "budget", "f1", "status"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(sorted(missing))}")
        for i, row in enumerate(reader):
            try:
                for c in ints & row.keys():
                    row[c] = int(row[c])
                for c in floats & row.keys():
                    row[c] = float(row[c])
            except ValueError as e:
                raise ValueError(f"{path}: row {i}: {e}") from None
            out.append(row)
    return out


def strip_columns(csv_text: str, drop: Sequence[str] = EPSILON_COLUMNS) -> str:
    """CSV text with the named columns removed (for determinism comparisons)."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    keep = [i for i, c in enumerate(rows[0]) if c not in drop]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([row[i] for i in keep])
    return buf.getvalue()
