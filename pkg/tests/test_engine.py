import time
import warnings
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

import semibench.engine as engine
from semibench.dataset import BALANCED, SCENARIOS, UNBALANCED, VERY_UNBALANCED
from semibench.engine import (RESULT_COLUMNS, CampaignConfig, ConfigError, default_min_benign,
                              measure_epsilon, read_results, run_campaign, run_cell, strip_columns,
                              write_repeats, write_results)
from semibench.learner import LearnerConfig
from semibench.methods import ALL_METHODS, BASELINES
from semibench.synth import SynthSpec, generate

TINY = LearnerConfig(n_trees=5, max_depth=6)
SYNTH = SynthSpec(300, 200, 3, 2.0, seed=1)


def config(**kw):
    base = dict(methods=BASELINES, budgets=(20,), scenarios=(BALANCED,), n=2, k=2,
                synth=SYNTH, learner=TINY, master_seed=7)
    base.update(kw)
    return CampaignConfig(**base)


# -- validation ---------------------------------------------------------------------------

@pytest.mark.parametrize("drop,req", [("SL", "R1"), ("SsL_vanilla", "R2"), ("SL_upper", "R3")])
def test_missing_baseline_names_requirement(drop, req):
    methods = [m for m in BASELINES if m.id != drop]
    with pytest.raises(ConfigError, match=req) as e:
        config(methods=methods).validate()
    assert e.value.field == "methods"


@pytest.mark.parametrize("kw,field", [
    (dict(budgets=()), "budgets"),
    (dict(scenarios=()), "scenarios"),
    (dict(n=0), "n"),
    (dict(k=0), "k"),
    (dict(test_fraction=1.0), "test_fraction"),
    (dict(budgets=(20, 20)), "budgets"),
    (dict(budgets=(-5,)), "budgets"),
    (dict(synth=None), "dataset"),
    (dict(methods=BASELINES + BASELINES[:1]), "methods"),
    (dict(min_benign={(20, "balanced"): 20}), "min_benign"),
])
def test_validation_errors(kw, field):
    with pytest.raises(ConfigError) as e:
        config(**kw).validate()
    assert e.value.field == field


def test_active_methods_need_two_labels_per_class():
    with pytest.raises(ConfigError, match="2 labels per class"):
        config(methods=ALL_METHODS, budgets=(3,), scenarios=(UNBALANCED,)).validate()
    config(methods=ALL_METHODS, budgets=(8,), scenarios=(UNBALANCED,)).validate()


def test_empty_budgets_fail_before_any_work(monkeypatch):
    calls = []
    monkeypatch.setattr(engine, "run_task", lambda *a: calls.append(a))
    with pytest.raises(ConfigError):
        run_campaign(config(budgets=()))
    assert calls == []


def test_methods_accept_names():
    cfg = config(methods=["SL", "SL_upper", "SsL_vanilla", "alpha_h"])
    assert [m.id for m in cfg.methods] == ["SL", "SL_upper", "SsL_vanilla", "alpha_h"]


def test_default_min_benign():
    assert default_min_benign(200, UNBALANCED) == 100
    assert default_min_benign(25, BALANCED) == 12
    cfg = config(min_benign={(20, "balanced"): 4})
    assert cfg.min_benign_for(20, BALANCED) == 4
    assert cfg.min_benign_for(20, UNBALANCED) == 10


# -- record counts --------------------------------------------------------------------------

def test_record_counts():
    cfg = config(budgets=(20, 30), scenarios=(BALANCED, VERY_UNBALANCED), n=3, k=2)
    res = run_campaign(cfg)
    assert cfg.runs_per_method == 24
    counts = Counter(r.method for r in res.records)
    assert counts == {m.id: 24 for m in BASELINES}
    cells = Counter((r.budget, r.scenario) for r in res.by_method("SL"))
    assert set(cells.values()) == {6}
    assert not res.failures


def test_run_cell_counts_and_repeats():
    cfg = config(methods=BASELINES + (ALL_METHODS[5],), n=2, k=1)
    records, repeats = run_cell(generate(SYNTH), cfg, 20, BALANCED)
    assert Counter(r.method for r in records) == {m.id: 2 for m in cfg.methods}
    assert len(repeats) == 2 * 5
    assert {r.repeats for r in records if r.method == "alpha_l"} == {5}


def test_single_cell_shares_labelled_set(monkeypatch):
    seen = []
    real = engine.run_method

    def spy(spec, L, U, Lbar, F, *a, **kw):
        seen.append((spec.id, tuple(np.sort(L.ids)), tuple(np.sort(U.ids)), tuple(np.sort(F.ids))))
        return real(spec, L, U, Lbar, F, *a, **kw)

    monkeypatch.setattr(engine, "run_method", spy)
    cfg = config(methods=ALL_METHODS, n=1, k=1)
    run_campaign(cfg, workers=1)
    assert [s[0] for s in seen] == [m.id for m in ALL_METHODS]
    assert len({s[1:] for s in seen}) == 1


def test_cells_differ_across_draws():
    res = run_campaign(config(n=2, k=2))
    traces = {r.seed_trace for r in res.by_method("SL")}
    assert len(traces) == 4


def test_sizes_consistent():
    res = run_campaign(config(methods=ALL_METHODS, budgets=(20, 40), scenarios=tuple(SCENARIOS.values())))
    for r in res.records:
        assert r.size_L + r.size_U == r.size_Lbar
        assert r.L_benign + r.L_malicious == r.size_L
        assert 0 <= r.f1 <= 1 and 0 <= r.precision <= 1 and 0 <= r.recall <= 1
        assert r.spent <= r.budget
        if r.method.startswith("alpha"):
            assert r.spent == r.budget


# -- determinism -------------------------------------------------------------------------------

def results_text(res, tmp_path, name):
    path = write_results(res.records, tmp_path / name)
    return strip_columns(path.read_text())


def test_same_seed_same_records(tmp_path):
    cfg = config(methods=ALL_METHODS[:5] + ALL_METHODS[8:9])
    a = results_text(run_campaign(cfg), tmp_path, "a.csv")
    b = results_text(run_campaign(cfg), tmp_path, "b.csv")
    assert a == b
    c = results_text(run_campaign(config(methods=cfg.methods, master_seed=8)), tmp_path, "c.csv")
    assert a != c


def test_worker_count_does_not_matter(tmp_path):
    cfg = config(methods=ALL_METHODS[:4] + ALL_METHODS[6:7])
    one = results_text(run_campaign(cfg, workers=1), tmp_path, "one.csv")
    three = results_text(run_campaign(cfg, workers=3), tmp_path, "three.csv")
    assert one == three


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv(engine.WORKERS_ENV, "3")
    assert engine.default_workers() == 3
    monkeypatch.setenv(engine.WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        engine.default_workers()
    monkeypatch.delenv(engine.WORKERS_ENV)
    assert engine.default_workers() == 1


# -- timing ------------------------------------------------------------------------------------

def test_measure_epsilon():
    assert measure_epsilon(lambda: None) < 1.0
    a = measure_epsilon(lambda: time.sleep(0.01))
    assert a >= 10.0
    both = measure_epsilon(lambda: (time.sleep(0.01), time.sleep(0.01)))
    assert both >= a - 1.0 and both >= 20.0


def test_vanilla_time_contains_sl_fit():
    res = run_campaign(config(n=3, k=2, learner=LearnerConfig(n_trees=30)))
    sl = {(r.k_index, r.n_index): r.epsilon_ms for r in res.by_method("SL")}
    van = {(r.k_index, r.n_index): r.epsilon_ms for r in res.by_method("SsL_vanilla")}
    # vanilla performs the SL fit plus a prediction and a larger refit
    assert sum(van.values()) >= sum(sl.values())
    assert sum(v >= sl[c] for c, v in van.items()) >= len(van) - 1


# -- failures and warnings -----------------------------------------------------------------------

def test_failed_runs_are_recorded():
    # the unlabelled pool is too small for the active suggestions
    cfg = config(methods=BASELINES + (ALL_METHODS[5],), synth=SynthSpec(30, 30, 2, 2.0, seed=1),
                 budgets=(40,), n=1, k=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_campaign(cfg)
    failed = res.failures
    assert [r.method for r in failed] == ["alpha_l"]
    assert "PoolExhausted" in failed[0].error
    assert all(r.status == "ok" for r in res.records if r.method != "alpha_l")


def test_size_warning():
    cfg = config(synth=SynthSpec(60, 60, 2, 2.0, seed=1), budgets=(40,), n=1, k=1)
    with pytest.warns(UserWarning, match="not smaller than the future set"):
        run_campaign(cfg)


def test_no_warning_on_large_data(recwarn):
    run_campaign(config(n=1, k=1))
    assert not [w for w in recwarn if "future set" in str(w.message)]


# -- CSV ---------------------------------------------------------------------------------------

def test_results_csv_round_trip(tmp_path):
    res = run_campaign(config(methods=ALL_METHODS[:3] + ALL_METHODS[7:8], n=1, k=1))
    path = write_results(res.records, tmp_path / "r.csv")
    rows = read_results(path)
    assert list(rows[0]) == RESULT_COLUMNS
    assert [r["method"] for r in rows] == [r.method for r in res.records]
    assert [r["f1"] for r in rows] == [r.f1 for r in res.records]
    rep = write_repeats(res.repeats, tmp_path / "p.csv", drop_epsilon=True)
    assert "epsilon_ms" not in rep.read_text().splitlines()[0]
    assert len(rep.read_text().splitlines()) == 1 + 5


def test_fraction_cells():
    assert engine._cell(Fraction(40)) == "40"
    assert engine._cell(Fraction(1, 4)) == "0.25"


def test_strip_columns():
    text = "a,epsilon_ms,b\n1,2.5,3\n"
    assert strip_columns(text) == "a,b\n1,3\n"
    assert strip_columns("") == ""


def test_read_results_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_results(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("method,f1\nSL,0.5\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_results(bad)


def test_records_do_not_depend_on_other_methods():
    full = run_campaign(config(methods=ALL_METHODS))
    cfg = config(methods=("SL", "SsL_vanilla"))
    part = []
    for b in cfg.budgets:
        for s in cfg.scenarios:
            part += run_cell(generate(SYNTH), cfg, b, s)[0]
    for method in ("SL", "SsL_vanilla"):
        a = [(r.k_index, r.n_index, r.f1, r.seed_trace) for r in full.by_method(method)]
        b = [(r.k_index, r.n_index, r.f1, r.seed_trace) for r in part if r.method == method]
        assert a == b
