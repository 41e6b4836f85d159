"""End-to-end acceptance criteria, one test per criterion.

Each test records a one-line verdict in ``RESULTS``; the conftest prints
them after the run. Criteria 7 and 8 share one synthetic campaign.
"""

import time
import warnings
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from semibench.dataset import (BALANCED, SCENARIOS, UNBALANCED, VERY_UNBALANCED, PartitionSpec,
                               compose_labelled, labelling_cost, split_future)
from semibench.engine import (CampaignConfig, default_min_benign, run_campaign, run_cell,
                              strip_columns, write_results)
from semibench.learner import LearnerConfig, fit
from semibench.methods import ALL_METHODS, MethodSpec, run_method
from semibench.seeding import stream
from semibench.stats import ConfusionCounts, effect_size, metrics, wilcoxon_ranksum
from semibench.synth import SynthSpec, generate

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str, seconds: float, limit: float) -> None:
    verdict = "PASS" if ok else "FAIL"
    RESULTS[n] = f"criterion {n:>2}: {verdict}  {detail}  [{seconds:.1f}s, limit {limit:g}s]"


# (scenario, budget, malicious, benign) for the three task scales, cost_benign = 1
REFERENCE_ROWS = [
    (BALANCED, 100, 50, 50), (BALANCED, 200, 100, 100), (BALANCED, 400, 200, 200),
    (BALANCED, 800, 400, 400), (UNBALANCED, 200, 50, 100), (UNBALANCED, 400, 100, 200),
    (UNBALANCED, 800, 200, 400), (UNBALANCED, 1600, 400, 800), (VERY_UNBALANCED, 500, 50, 250),
    (VERY_UNBALANCED, 1000, 100, 500), (VERY_UNBALANCED, 2000, 200, 1000),
    (VERY_UNBALANCED, 4000, 400, 2000),
    (BALANCED, 40, 20, 20), (BALANCED, 80, 40, 40), (BALANCED, 160, 80, 80),
    (BALANCED, 320, 160, 160), (UNBALANCED, 80, 20, 40), (UNBALANCED, 160, 40, 80),
    (UNBALANCED, 320, 80, 160), (UNBALANCED, 640, 160, 320), (VERY_UNBALANCED, 200, 20, 100),
    (VERY_UNBALANCED, 400, 40, 200), (VERY_UNBALANCED, 800, 80, 400),
    (VERY_UNBALANCED, 1600, 160, 800),
    (BALANCED, 80, 40, 40), (BALANCED, 160, 80, 80), (BALANCED, 320, 160, 160),
    (BALANCED, 640, 320, 320), (UNBALANCED, 160, 40, 80), (UNBALANCED, 320, 80, 160),
    (UNBALANCED, 640, 160, 320), (UNBALANCED, 1280, 320, 640), (VERY_UNBALANCED, 400, 40, 200),
    (VERY_UNBALANCED, 800, 80, 400), (VERY_UNBALANCED, 1600, 160, 800),
    (VERY_UNBALANCED, 3200, 320, 1600),
]


def test_criterion_01_reference_composition():
    t0 = time.perf_counter()
    pool = generate(SynthSpec(2500, 600, 1, 1.0, seed=2), "pool")
    wrong = []
    for scenario, budget, n_mal, n_ben in REFERENCE_ROWS:
        spec = PartitionSpec(budget, n_ben, scenario)
        L, _, ledger = compose_labelled(pool, spec, stream(budget))
        got = (L.count(1), L.count(0))
        if got != (n_mal, n_ben) or ledger.spent != budget or default_min_benign(budget, scenario) != n_ben:
            wrong.append((scenario.name, budget, got))
    elapsed = time.perf_counter() - t0
    ok = not wrong and len(REFERENCE_ROWS) == 36 and elapsed < 1
    record(1, ok, f"{36 - len(wrong)}/36 rows reproduced exactly", elapsed, 1)
    assert not wrong
    assert elapsed < 1


SMALL = LearnerConfig(n_trees=5, max_depth=8)


def test_criterion_02_popsize_arithmetic():
    t0 = time.perf_counter()
    cfg = CampaignConfig(methods=ALL_METHODS, budgets=(40, 80, 160, 320),
                         scenarios=tuple(SCENARIOS.values()), n=11, k=3,
                         synth=SynthSpec(1400, 600, 5, 2.0, seed=0), learner=SMALL, master_seed=0)
    res = run_campaign(cfg)
    elapsed = time.perf_counter() - t0
    counts = Counter(r.method for r in res.records)
    reps = Counter(r.method for r in res.repeats)
    ok_counts = all(counts[m.id] == 396 for m in ALL_METHODS)
    ok_repeats = all(reps[m.id] == 396 * 5 for m in ALL_METHODS if m.is_active)
    ok = ok_counts and ok_repeats and not res.failures and elapsed < 120
    record(2, ok, f"records per method {sorted(set(counts.values()))} (expected 396), "
                  f"active repeats {sorted(set(reps.values()))}, failures {len(res.failures)}",
           elapsed, 120)
    assert ok_counts and ok_repeats and not res.failures
    assert elapsed < 120


def test_criterion_03_budget_safety_sweep():
    t0 = time.perf_counter()
    data = generate(SynthSpec(900, 600, 3, 2.0, seed=4), "sweep")
    rng = np.random.default_rng(2024)
    scenarios = list(SCENARIOS.values())
    tiny = LearnerConfig(n_trees=3, max_depth=5)
    violations, active_gaps, runs = [], [], 0
    for i in range(1000):
        scenario = scenarios[rng.integers(3)]
        # include budgets that leave a residual after composition
        budget = int(rng.integers(24, 200)) + (0.5 if rng.random() < 0.3 else 0)
        spec = ALL_METHODS[rng.integers(len(ALL_METHODS))]
        spec = MethodSpec(spec.kind, spec.band, active_repeats=2)
        mb = default_min_benign(budget, scenario)
        part = PartitionSpec(budget, mb, scenario)
        F, Lbar = split_future(data, part, stream(i))
        L, U, ledger = compose_labelled(Lbar, part, stream(10_000 + i))
        out = run_method(spec, L, U, Lbar, F, tiny.with_seed(i), scenario, i, budget)
        runs += 1
        if spec.is_active:
            spends = [rep.spent for rep in out.repeats]
            if any(s != Fraction(budget) for s in spends):
                active_gaps.append((i, spec.id, budget, spends))
            # verified labels: the kept half plus q suggestions at the standardized unit cost
            for rep in out.repeats:
                half_cost = labelling_cost(L, scenario) - out.audit["restored_budget"]
                verified = half_cost + out.audit["q"] * rep.audit["unit_cost"]
                if verified > budget or verified != rep.spent:
                    violations.append((i, spec.id, budget))
        else:
            spent = ledger.spent
            if spec.kind.value != "SL_upper" and labelling_cost(L, scenario) != spent:
                violations.append((i, spec.id, budget))
            if spent > budget:
                violations.append((i, spec.id, budget))
    elapsed = time.perf_counter() - t0
    ok = runs == 1000 and not violations and not active_gaps and elapsed < 300
    record(3, ok, f"{runs} runs, {len(violations)} overspends, {len(active_gaps)} active runs "
                  "not spending exactly the budget", elapsed, 300)
    assert not violations and not active_gaps
    assert elapsed < 300


def test_criterion_04_determinism_across_workers(tmp_path):
    t0 = time.perf_counter()
    cfg = CampaignConfig(methods=ALL_METHODS, budgets=(40, 80), scenarios=tuple(SCENARIOS.values()),
                         n=2, k=2, synth=SynthSpec(1400, 600, 5, 2.0, seed=1), learner=SMALL,
                         master_seed=11)
    texts = {}
    for label, workers in (("w1", 1), ("w8", 8), ("w1_again", 1)):
        path = write_results(run_campaign(cfg, workers=workers).records, tmp_path / f"{label}.csv")
        texts[label] = strip_columns(path.read_text()).encode()
    elapsed = time.perf_counter() - t0
    same = texts["w1"] == texts["w8"] == texts["w1_again"]
    ok = same and elapsed < 300
    record(4, ok, f"stripped results identical at workers 1, 8 and 1 again: {same} "
                  f"({len(texts['w1'])} bytes)", elapsed, 300)
    assert same
    assert elapsed < 300


def exact_two_sided_p(a, b):
    """Permutation p by counting every rank-sum assignment (tie-free input)."""
    pooled = np.r_[a, b]
    ranks = pooled.argsort().argsort() + 1
    n, na = len(pooled), len(a)
    w_obs = int(ranks[:na].sum())
    mu2 = na * (n + 1)  # twice the mean, keeps everything integral
    # ways[k][s]: subsets of size k from the ranks seen so far with sum s
    ways = [[0] * (n * (n + 1) // 2 + 1) for _ in range(na + 1)]
    ways[0][0] = 1
    for r in range(1, n + 1):
        for k in range(min(r, na), 0, -1):
            row, prev = ways[k], ways[k - 1]
            for s in range(len(row) - 1, r - 1, -1):
                row[s] += prev[s - r]
    far = abs(2 * w_obs - mu2)
    hits = sum(c for s, c in enumerate(ways[na]) if abs(2 * s - mu2) >= far)
    total = sum(ways[na])
    return hits / total


def test_criterion_05_wilcoxon_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(50):
            a = rng.normal(size=int(rng.integers(8, 13)))
            b = rng.normal(2 * rng.random(), size=int(rng.integers(8, 13)))
            assert len(np.unique(np.r_[a, b])) == len(a) + len(b)
            worst = max(worst, abs(wilcoxon_ranksum(a, b).p - exact_two_sided_p(a, b)))
        anti = True
        for _ in range(50):
            a, b = rng.normal(size=10), rng.normal(0.5, size=9)
            r1, r2 = wilcoxon_ranksum(a, b), wilcoxon_ranksum(b, a)
            anti &= r1.z == -r2.z and r1.p == r2.p
        same = wilcoxon_ranksum(a, a.copy())
        ident = same.z == 0 and same.p == 1 and not same.reject
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and anti and ident and elapsed < 60
    record(5, ok, f"max |p_approx - p_exact| = {worst:.4f} (tol 0.02), antisymmetry {anti}, "
                  f"identical populations z=0 p=1 {ident}", elapsed, 60)
    assert worst <= 0.02 and anti and ident
    assert elapsed < 60


def test_criterion_06_effect_size():
    t0 = time.perf_counter()
    got = effect_size(4.310, 396)
    elapsed = time.perf_counter() - t0
    ok = abs(got - 0.2166) <= 1e-4
    record(6, ok, f"effect size {got:.6f} (expected 0.2166 +- 1e-4)", elapsed, 1)
    assert ok


DIM10 = SynthSpec(10_000, 10_000, 10, 2.0, seed=0)


def campaign_77(master_seed, methods=ALL_METHODS):
    return CampaignConfig(methods=methods, budgets=(100,), scenarios=(BALANCED,), n=10, k=5,
                          synth=DIM10, learner=LearnerConfig(), master_seed=master_seed)


@pytest.fixture(scope="module")
def dim10():
    return generate(DIM10)


@pytest.fixture(scope="module")
def campaign7(dim10):
    t0 = time.perf_counter()
    res = run_campaign(campaign_77(0), dim10)
    return res, time.perf_counter() - t0


def mean_f1(records, method):
    v = [r.f1 for r in records if r.method == method and r.status == "ok"]
    return sum(v) / len(v), len(v)


def test_criterion_07_ordering(campaign7):
    res, elapsed = campaign7
    means = {m.id: mean_f1(res.records, m.id)[0] for m in ALL_METHODS}
    sizes = {m.id: mean_f1(res.records, m.id)[1] for m in ALL_METHODS}
    upper, lower = means["SL_upper"], means["SL"]
    gap = upper - lower
    above = {m: round(v, 4) for m, v in means.items() if v > upper + 0.01}
    gap_ok = gap >= 0.03
    order_ok = not above
    ok = gap_ok and order_ok and set(sizes.values()) == {50} and elapsed < 600
    record(7, ok, f"SL_upper {upper:.4f} - SL {lower:.4f} = {gap:.4f} (need >= 0.03: {gap_ok}); "
                  f"methods above SL_upper + 0.01: {above or 'none'}; "
                  f"Bayes-optimal F1 ceiling ~{1 - DIM10.bayes_error:.3f}", elapsed, 600)
    assert set(sizes.values()) == {50}
    assert order_ok, f"methods exceed the upper bound: {above}"
    assert gap_ok, f"upper/lower gap {gap:.4f} < 0.03"
    assert elapsed < 600


def test_criterion_08_vanilla_equivalence(campaign7, dim10):
    res0, elapsed0 = campaign7
    t0 = time.perf_counter()
    tests = []
    for seed in range(10):
        if seed == 0:
            records = res0.records
        else:
            # only the two compared populations are needed; their values do not depend on
            # which other methods share the cell
            cfg = campaign_77(seed, methods=("SL", "SsL_vanilla"))
            records = run_cell(dim10, cfg, 100, BALANCED)[0]
        a = [r.f1 for r in records if r.method == "SL"]
        b = [r.f1 for r in records if r.method == "SsL_vanilla"]
        assert len(a) == len(b) == 50
        tests.append(wilcoxon_ranksum(b, a, tails=2))
    elapsed = time.perf_counter() - t0 + elapsed0
    accepted = sum(not t.reject for t in tests)
    ok = accepted >= 8 and elapsed < 1800
    ps = ", ".join(f"{t.p:.3f}" for t in tests)
    record(8, ok, f"H0 accepted in {accepted}/10 master seeds (need >= 8); p = [{ps}]", elapsed, 1800)
    assert accepted >= 8
    assert elapsed < 1800


def test_criterion_09_reference_learner():
    d = generate(SynthSpec(500, 500, 10, 10.0, seed=1))
    perm = np.random.default_rng(0).permutation(len(d))
    train, test = d.take(perm[:800]), d.take(perm[800:])
    t0 = time.perf_counter()
    model = fit(train, LearnerConfig(n_trees=100))
    f1 = metrics(ConfusionCounts.from_labels(test.y, model.predict(test.X).labels)).f1
    elapsed = time.perf_counter() - t0
    ok = f1 >= 0.99 and elapsed < 10
    record(9, ok, f"test F1 {f1:.4f} (need >= 0.99)", elapsed, 10)
    assert f1 >= 0.99
    assert elapsed < 10


def brute_force(tp, fp, tn, fn):
    truth = [1] * tp + [0] * fp + [0] * tn + [1] * fn
    guess = [1] * tp + [1] * fp + [0] * tn + [0] * fn
    hit = sum(t and g for t, g in zip(truth, guess))
    p = Fraction(hit, sum(guess)) if sum(guess) else Fraction(0)
    r = Fraction(hit, sum(truth)) if sum(truth) else Fraction(0)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return float(f), float(p), float(r)


def test_criterion_10_metric_correctness():
    rng = np.random.default_rng(10)
    vectors = [tuple(int(v) for v in rng.integers(0, 40, 4)) for _ in range(1000)]
    # every 0/0 pattern: no predicted positives, no actual positives, neither
    vectors[:4] = [(0, 0, 5, 3), (0, 4, 5, 0), (0, 0, 7, 0), (0, 0, 0, 0)]
    t0 = time.perf_counter()
    got = [metrics(ConfusionCounts(*v)) for v in vectors]
    elapsed = time.perf_counter() - t0
    bad = [v for v, g in zip(vectors, got) if (g.f1, g.precision, g.recall) != brute_force(*v)]
    ok = not bad and elapsed < 1
    record(10, ok, f"{1000 - len(bad)}/1000 count vectors match the brute-force oracle exactly",
           elapsed, 1)
    assert not bad
    assert elapsed < 1
