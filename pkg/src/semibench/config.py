"""TOML campaign configuration.

Schema (every key optional unless marked required)::

    name = "demo"                 # dataset label used in reports
    master_seed = 0
    n = 2                         # labelled-set redraws per future set
    k = 2                         # future-set redraws
    test_fraction = 0.2
    methods = "all"               # or a list such as ["SL", "SL_upper", "SsL_vanilla", "pi", "alpha_l"]
    budgets = [100, 200]          # required
    scenarios = ["balanced", "unbalanced", "very_unbalanced"]
                                  # entries may also be inline tables:
                                  # {name = "x3", cost_benign = 1, cost_malicious = 3}

    [dataset]                     # exactly one of [dataset] and [synth]
    path = "flows.csv"            # relative paths resolve against the config file
    label_column = "label"

    [synth]
    n_benign = 500
    n_malicious = 500
    dim = 10
    separation = 2.0
    seed = 0

    [learner]
    n_trees = 100
    max_depth = 0                 # 0 means unlimited
    min_leaf = 1
    bootstrap = true

    [[min_benign]]                # overrides floor(budget / (2 * cost_benign))
    budget = 100
    scenario = "balanced"
    count = 40

    [report]
    alpha = 0.05
    delta = 0.05                  # minimum upper/lower gap before any benefit is claimed
    unlabelled_cost = 0.0
    epsilon_rate = 0.0            # budget units per millisecond of extra cost
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import SCENARIOS, CostScenario
from .engine import CampaignConfig, ConfigError
from .learner import LearnerConfig
from .methods import ALL_METHODS, MethodSpec
from .synth import SynthSpec

TOP_KEYS = {"name", "master_seed", "n", "k", "test_fraction", "methods", "budgets", "scenarios",
            "dataset", "synth", "learner", "min_benign", "report"}


@dataclass(frozen=True)
class ReportConfig:
    alpha: float = 0.05
    delta: float = 0.05
    unlabelled_cost: float = 0.0
    epsilon_rate: float = 0.0


def _table(raw: dict, key: str, allowed: set) -> dict:
    t = raw.get(key, {})
    if not isinstance(t, dict):
        raise ConfigError(key, "must be a table")
    extra = set(t) - allowed
    if extra:
        raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown key")
    return t


def _int(v, field: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(field, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(field, f"must be >= {minimum}")
    return v


def _num(v, field: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(field, f"expected a number, got {v!r}")
    return float(v)


def _scenario(entry, i: int) -> CostScenario:
    field = f"scenarios[{i}]"
    if isinstance(entry, str):
        if entry not in SCENARIOS:
            raise ConfigError(field, f"unknown scenario {entry!r}; known: {', '.join(SCENARIOS)}")
        return SCENARIOS[entry]
    if isinstance(entry, dict):
        extra = set(entry) - {"name", "cost_benign", "cost_malicious"}
        if extra or "name" not in entry:
            raise ConfigError(field, "inline scenarios need name, cost_benign, cost_malicious")
        try:
            return CostScenario(_num(entry.get("cost_benign", 1.0), field + ".cost_benign"),
                                _num(entry.get("cost_malicious"), field + ".cost_malicious"),
                                str(entry["name"]))
        except ValueError as e:
            raise ConfigError(field, str(e)) from None
    raise ConfigError(field, "must be a scenario name or an inline table")


def parse_config(raw: dict, base_dir: Path | None = None) -> tuple[CampaignConfig, ReportConfig]:
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown key")

    methods_raw = raw.get("methods", "all")
    if methods_raw == "all":
        methods = ALL_METHODS
    elif isinstance(methods_raw, list):
        try:
            methods = tuple(MethodSpec.parse(str(m)) for m in methods_raw)
        except ValueError as e:
            raise ConfigError("methods", str(e)) from None
    else:
        raise ConfigError("methods", 'must be "all" or a list of method names')

    budgets_raw = raw.get("budgets")
    if budgets_raw is None:
        raise ConfigError("budgets", "required")
    if not isinstance(budgets_raw, list):
        raise ConfigError("budgets", "must be a list")
    budgets = tuple(_num(b, f"budgets[{i}]") for i, b in enumerate(budgets_raw))

    scen_raw = raw.get("scenarios", list(SCENARIOS))
    if not isinstance(scen_raw, list):
        raise ConfigError("scenarios", "must be a list")
    scenarios = tuple(_scenario(s, i) for i, s in enumerate(scen_raw))

    ds = _table(raw, "dataset", {"path", "label_column"})
    sy = _table(raw, "synth", {"n_benign", "n_malicious", "dim", "separation", "seed"})
    if ds and sy:
        raise ConfigError("dataset", "give either [dataset] or [synth], not both")
    dataset = None
    synth = None
    label_column = "label"
    if ds:
        if "path" not in ds:
            raise ConfigError("dataset.path", "required")
        dataset = Path(ds["path"])
        if base_dir is not None and not dataset.is_absolute():
            dataset = base_dir / dataset
        label_column = str(ds.get("label_column", "label"))
    elif sy:
        try:
            synth = SynthSpec(_int(sy.get("n_benign", 500), "synth.n_benign"),
                              _int(sy.get("n_malicious", 500), "synth.n_malicious"),
                              _int(sy.get("dim", 10), "synth.dim"),
                              _num(sy.get("separation", 2.0), "synth.separation"),
                              _int(sy.get("seed", 0), "synth.seed"))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError("synth", str(e)) from None
    else:
        raise ConfigError("dataset", "a [dataset] or [synth] table is required")

    lr = _table(raw, "learner", {"n_trees", "max_depth", "min_leaf", "bootstrap"})
    depth = _int(lr.get("max_depth", 0), "learner.max_depth", 0)
    bootstrap = lr.get("bootstrap", True)
    if not isinstance(bootstrap, bool):
        raise ConfigError("learner.bootstrap", "must be true or false")
    learner = LearnerConfig(n_trees=_int(lr.get("n_trees", 100), "learner.n_trees", 1),
                            max_depth=depth or None,
                            min_leaf=_int(lr.get("min_leaf", 1), "learner.min_leaf", 1),
                            bootstrap=bootstrap)

    by_name = {s.name: s for s in scenarios}
    min_benign = {}
    mb_raw = raw.get("min_benign", [])
    if not isinstance(mb_raw, list):
        raise ConfigError("min_benign", "must be an array of tables")
    for i, entry in enumerate(mb_raw):
        field = f"min_benign[{i}]"
        if not isinstance(entry, dict) or set(entry) != {"budget", "scenario", "count"}:
            raise ConfigError(field, "entries need exactly budget, scenario, count")
        b = _num(entry["budget"], field + ".budget")
        if b not in budgets:
            raise ConfigError(field + ".budget", f"{b:g} is not a configured budget")
        if entry["scenario"] not in by_name:
            raise ConfigError(field + ".scenario", f"{entry['scenario']!r} is not a configured scenario")
        min_benign[(b, entry["scenario"])] = _int(entry["count"], field + ".count", 0)

    rp = _table(raw, "report", {"alpha", "delta", "unlabelled_cost", "epsilon_rate"})
    report = ReportConfig(**{k: _num(v, f"report.{k}") for k, v in rp.items()})
    if not 0 < report.alpha < 1:
        raise ConfigError("report.alpha", "must lie in (0, 1)")

    test_fraction = _num(raw.get("test_fraction", 0.2), "test_fraction")
    cfg = CampaignConfig(
        methods=methods, budgets=budgets, scenarios=scenarios,
        n=_int(raw.get("n", 1), "n"), k=_int(raw.get("k", 1), "k"),
        dataset=dataset, synth=synth, label_column=label_column, min_benign=min_benign,
        test_fraction=test_fraction, learner=learner,
        master_seed=_int(raw.get("master_seed", 0), "master_seed", 0),
        name=str(raw["name"]) if "name" in raw else None)
    return cfg.validate(), report


def load_config(path) -> tuple[CampaignConfig, ReportConfig]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("config", f"{path}: {e}") from None
    return parse_config(raw, path.parent)
