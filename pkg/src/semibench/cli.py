"""Command-line front end: ``semibench run | plotdata | gen``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import warnings
from collections import OrderedDict
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import ReportConfig, load_config
from .dataset import DatasetError, class_ratio, write_csv
from .engine import (CampaignResult, ConfigError, default_workers, read_results, run_campaign,
                     write_repeats, write_results)
from .methods import ALL_METHODS, Kind
from .stats import Comparison, EmptyPopulation, compare_methods
from .synth import SynthSpec, generate

STATS_COLUMNS = ["dataset", "baseline", "challenger", "tails", "pop_size", "z", "p", "effect_size",
                 "verdict", "benefit"]
PLOT_COLUMNS = ["scenario", "budget", "method", "mean_f1", "std_f1", "count"]
PURE_PSEUDO = {Kind.VANILLA, Kind.PSEUDO, Kind.PSEUDO_ITERATED}
ACTIVE = {Kind.ACTIVE, Kind.PSEUDO_ACTIVE}


def fail(field: str, message: str, code: int = 2) -> int:
    print(f"error: field={field} message={message}", file=sys.stderr)
    return code


# -- reports ---------------------------------------------------------------------

def mean_f1_by_method(records) -> dict:
    acc: dict = OrderedDict()
    for r in records:
        if r.status == "ok":
            acc.setdefault(r.method, []).append(r.f1)
    return {m: sum(v) / len(v) for m, v in acc.items()}


def best_method(records, kinds: set) -> str | None:
    """Highest campaign-mean F1 among methods of the given kinds (first wins a tie)."""
    means = mean_f1_by_method(records)
    best = None
    for spec in ALL_METHODS:
        if spec.kind in kinds and spec.id in means:
            if best is None or means[spec.id] > means[best]:
                best = spec.id
    return best


def comparisons(result: CampaignResult, report: ReportConfig) -> list[Comparison]:
    out = []
    for kinds in (PURE_PSEUDO, ACTIVE):
        challenger = best_method(result.records, kinds)
        if challenger is None:
            continue
        for tails in (2, 1):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    out.append(compare_methods(result.records, "SL", challenger, tails=tails,
                                               alpha=report.alpha, delta=report.delta,
                                               unlabelled_cost=report.unlabelled_cost,
                                               epsilon_rate=report.epsilon_rate))
            except EmptyPopulation:
                continue
    return out


def write_stats(rows: list[Comparison], dataset: str, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for c in rows:
            t = c.test
            w.writerow([dataset, c.baseline, c.challenger, t.tails, t.pop_size, repr(t.z), repr(t.p),
                        repr(t.effect_size), t.verdict, c.benefit])
    return path


def _digest(data) -> str:
    h = hashlib.sha256()
    for arr in (data.X, data.y, data.ids):
        h.update(arr.tobytes())
    return h.hexdigest()


def transparency_report(result: CampaignResult, report: ReportConfig, data, stats: list[Comparison]) -> dict:
    """Composition of every run's sets plus everything needed to rerun the campaign."""
    cfg = result.config
    runs = OrderedDict()
    for r in result.records:
        key = f"{r.budget:g}/{r.scenario}/k{r.k_index}/n{r.n_index}"
        if key in runs or not r.size_Lbar:
            runs.setdefault(key, {"budget": r.budget, "scenario": r.scenario, "k_index": r.k_index,
                                  "n_index": r.n_index, "error": r.error})
            continue
        total = r.size_Lbar + r.size_F
        sets = {}
        for tag in ("L", "U", "Lbar", "F"):
            size = getattr(r, f"size_{tag}")
            sets[tag] = {"size": size, "relative": size / total,
                         "benign": getattr(r, f"{tag}_benign"),
                         "malicious": getattr(r, f"{tag}_malicious"),
                         "ratio": getattr(r, f"ratio_{tag}")}
        runs[key] = {"budget": r.budget, "scenario": r.scenario, "k_index": r.k_index,
                     "n_index": r.n_index, "sets": sets,
                     "seeds": dict(p.split("=") for p in r.seed_trace.split(";") if not p.startswith("method"))}
    return {
        "framework": "semibench",
        "version": __version__,
        "dataset": {"name": result.dataset_name, "size": result.dataset_size, "sha256": _digest(data),
                    "benign": data.count(0), "malicious": data.count(1), "ratio": str(class_ratio(data)),
                    "path": str(cfg.dataset) if cfg.dataset else None,
                    "synth": asdict(cfg.synth) if cfg.synth else None},
        "campaign": {"master_seed": cfg.master_seed, "n": cfg.n, "k": cfg.k,
                     "budgets": list(cfg.budgets), "test_fraction": cfg.test_fraction,
                     "scenarios": [asdict(s) for s in cfg.scenarios],
                     "min_benign": {f"{b:g}/{s.name}": cfg.min_benign_for(b, s)
                                    for b in cfg.budgets for s in cfg.scenarios},
                     "methods": [m.id for m in cfg.methods],
                     "learner": {k: v for k, v in asdict(cfg.learner).items() if k != "seed"},
                     "records_per_method": cfg.runs_per_method},
        "report": asdict(report),
        "caveat": "epsilon is pipeline wall time only; human effort is not measured",
        "runs": runs,
        "comparisons": [{"baseline": c.baseline, "challenger": c.challenger, "tails": c.test.tails,
                         "pop_size": c.test.pop_size, "z": c.test.z, "p": c.test.p,
                         "effect_size": c.test.effect_size, "verdict": c.test.verdict,
                         "upper_lower_gap": c.gap, "benefit": c.benefit, "mean_f1": c.mean_f1,
                         "roi": c.roi} for c in stats],
        "failed_runs": len(result.failures),
    }


def print_summary(result: CampaignResult, stats: list[Comparison], out=None) -> None:
    out = out or sys.stdout
    means = mean_f1_by_method(result.records)
    print(f"dataset {result.dataset_name}: {len(result.records)} records, "
          f"{len(result.failures)} failed", file=out)
    print(f"{'method':<14}{'mean F1':>9}", file=out)
    for m, v in means.items():
        print(f"{m:<14}{v:>9.3f}", file=out)
    print(f"{'baseline':<10}{'challenger':<14}{'tails':>6}{'pop':>6}{'z':>9}{'p':>10}"
          f"{'effect':>9}  verdict    benefit", file=out)
    for c in stats:
        t = c.test
        print(f"{c.baseline:<10}{c.challenger:<14}{t.tails:>6}{t.pop_size:>6}{t.z:>9.3f}{t.p:>10.4f}"
              f"{t.effect_size:>9.4f}  {t.verdict:<10} {c.benefit}", file=out)


# -- commands ------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        cfg, report = load_config(args.config)
        workers = args.workers if args.workers is not None else default_workers()
        if workers < 1:
            raise ConfigError("workers", "must be >= 1")
        data = cfg.load_data()
    except ConfigError as e:
        return fail(e.field, str(e))
    except DatasetError as e:
        return fail("dataset", str(e))
    except FileNotFoundError as e:
        return fail("dataset", str(e))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_campaign(cfg, data, workers=workers)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(result.records, out / "results.csv")
    write_repeats(result.repeats, out / "repeats.csv")
    stats = comparisons(result, report)
    write_stats(stats, result.dataset_name, out / "stats.csv")
    with (out / "transparency.json").open("w", encoding="utf-8") as fh:
        json.dump(transparency_report(result, report, data, stats), fh, indent=2, sort_keys=False)
        fh.write("\n")
    print_summary(result, stats)
    return 0


def plot_rows(rows: list[dict]) -> list[dict]:
    groups: dict = OrderedDict()
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        groups.setdefault((r["scenario"], r["budget"], r["method"]), []).append(r["f1"])
    scen_order = list(OrderedDict.fromkeys(k[0] for k in groups))
    meth_order = list(OrderedDict.fromkeys(k[2] for k in groups))
    out = []
    for (s, b, m) in sorted(groups, key=lambda k: (scen_order.index(k[0]), k[1], meth_order.index(k[2]))):
        v = groups[(s, b, m)]
        mean = sum(v) / len(v)
        std = math.sqrt(sum((x - mean) ** 2 for x in v) / len(v))
        out.append({"scenario": s, "budget": b, "method": m, "mean_f1": mean, "std_f1": std, "count": len(v)})
    return out


def cmd_plotdata(args) -> int:
    try:
        rows = read_results(args.results)
    except (FileNotFoundError, ValueError) as e:
        return fail("results", str(e))
    out = Path(args.out)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for r in plot_rows(rows):
            w.writerow([r["scenario"], f"{r['budget']:g}", r["method"], repr(r["mean_f1"]),
                        repr(r["std_f1"]), r["count"]])
    return 0


def cmd_gen(args) -> int:
    try:
        spec = SynthSpec(args.benign, args.malicious, args.dim, args.sep, args.seed)
    except ValueError as e:
        return fail("synth", str(e))
    write_csv(generate(spec), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semibench", description="Budget-aware semisupervised detector benchmark")
    p.add_argument("--version", action="version", version=f"semibench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a campaign from a TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $SEMIBENCH_WORKERS or 1)")
    r.set_defaults(func=cmd_run)

    pd = sub.add_parser("plotdata", help="F1 mean/std per (scenario, budget, method)")
    pd.add_argument("--results", required=True)
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_plotdata)

    g = sub.add_parser("gen", help="write a synthetic Gaussian dataset as CSV")
    g.add_argument("--benign", type=int, required=True)
    g.add_argument("--malicious", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--sep", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
