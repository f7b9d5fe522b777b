"""Experiment runners: each returns files to write plus a summary.

Files are plain text (CSV with .17g floats, JSON with sorted keys),
built entirely from the run configuration and seed so reruns are
byte-identical; anything wall-clock or machine-specific stays out.
Fan-out work (replays, scenario runs) goes through an ordered process
pool when workers > 1, reduced in task order, so the worker count
never changes the output.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adversary import AdversaryProfile
from .config import ExperimentConfig
from .engine import SimConfig, materialize_data, run_simulation, stream
from .oracle import cosine_distance, exact_shapley, pearson, rerun_with_subset

# Experiment-level stream tag; engine tags stop at 7.
STREAM_REMOVAL = 8


@dataclass(frozen=True)
class ExperimentOutput:
    """What an experiment produces: named text files and a summary."""

    files: dict[str, str]
    summary: dict


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _json_file(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv_file(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            _fmt(v) if isinstance(v, (float, np.floating)) else v for v in row
        ])
    return buf.getvalue()


def _map_ordered(fn, tasks, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(task) for task in tasks]


def _config_echo(config: ExperimentConfig) -> dict:
    # workers is an execution detail; it must never change the output
    return _jsonable(config.model_dump(mode="python", by_alias=True, exclude={"workers"}))


def _round_notes(result) -> list[dict]:
    notes = []
    for log in result.round_logs:
        notes.append({
            "round": log.round_index,
            "c1_replaced": {str(i): list(v) for i, v in sorted(log.c1_replaced.items())},
            "outlier_replaced": list(log.outlier_replaced),
            "outlier_flag_rows": log.outlier_flag_rows,
            "outlier_objective": log.outlier_objective,
            "no_report": list(log.no_report),
        })
    return notes


def _sim_files(config: ExperimentConfig, result) -> dict[str, str]:
    n = result.config.n
    client_cols = [f"c{j}" for j in range(n)]
    contributions = _csv_file(
        ["owner"] + client_cols,
        [[i] + [result.contributions[i, j] for j in range(n)] for i in range(n)],
    )
    accuracy = _csv_file(
        ["round"] + client_cols,
        [[t] + [result.accuracy[t, j] for j in range(n)] for t in range(result.accuracy.shape[0])],
    )
    lcv_rows = []
    for log in result.round_logs:
        if log.lcvs_reported is None:
            continue
        for reported, used in zip(log.lcvs_reported, log.lcvs_used):
            for j in reported.support():
                lcv_rows.append([
                    log.round_index, reported.owner, j,
                    reported.entries[j], used.entries.get(j, 0.0),
                ])
    lcv_log = _csv_file(["round", "owner", "subject", "reported", "used"], lcv_rows)
    result_json = _json_file({
        "name": config.name,
        "config": _config_echo(config),
        "dishonest": list(result.dishonest),
        "final_accuracy_mean": float(result.accuracy[-1].mean()),
        "contribution_totals": result.client_totals(),
        "rounds": _round_notes(result),
    })
    return {
        "result.json": result_json,
        "contributions.csv": contributions,
        "accuracy.csv": accuracy,
        "lcv_log.csv": lcv_log,
    }


def run_simulate(config: ExperimentConfig) -> ExperimentOutput:
    """One full decentralized run, logged."""
    cfg = config.to_sim_config()
    result = run_simulation(cfg)
    summary = {
        "name": config.name,
        "n": cfg.n,
        "rounds": cfg.rounds,
        "dishonest": list(result.dishonest),
        "final_accuracy_mean": float(result.accuracy[-1].mean()),
        "contribution_totals_mean": float(result.client_totals().mean()),
    }
    return ExperimentOutput(files=_sim_files(config, result), summary=summary)


def run_shapley(config: ExperimentConfig) -> ExperimentOutput:
    """Per-round accounting versus exact re-execution ground truth."""
    cfg = config.to_sim_config()
    if cfg.dishonest:
        raise ValueError("ground-truth comparison requires an honest configuration")
    result = run_simulation(cfg)
    reference = exact_shapley(cfg, cap=config.oracle.cap, workers=config.workers)
    ref_matrix = reference.phi_normalized if cfg.normalize_lcv else reference.phi_literal
    per_owner = []
    distances = []
    undefined = []
    for i in range(cfg.n):
        try:
            dist = cosine_distance(result.contributions[i], ref_matrix[i])
            distances.append(dist)
        except ValueError:
            dist = None
            undefined.append(i)
        per_owner.append({"owner": i, "distance": dist})
    mean_distance = float(np.mean(distances)) if distances else None
    n = cfg.n
    client_cols = [f"c{j}" for j in range(n)]
    files = {
        "shapley.json": _json_file({
            "name": config.name,
            "config": _config_echo(config),
            "convention": "normalized" if cfg.normalize_lcv else "literal",
            "per_owner": per_owner,
            "mean_distance": mean_distance,
            "undefined_owners": undefined,
            "zero_vector_guard": bool(undefined),
        }),
        "trip_contributions.csv": _csv_file(
            ["owner"] + client_cols,
            [[i] + [result.contributions[i, j] for j in range(n)] for i in range(n)],
        ),
        "exact_contributions.csv": _csv_file(
            ["owner"] + client_cols,
            [[i] + [ref_matrix[i, j] for j in range(n)] for i in range(n)],
        ),
    }
    summary = {
        "name": config.name,
        "mean_distance": mean_distance,
        "undefined_owners": undefined,
        "zero_vector_guard": bool(undefined),
    }
    return ExperimentOutput(files=files, summary=summary)


def _survivor_accuracy(args: tuple[SimConfig, tuple[int, ...]]) -> float:
    cfg, survivors = args
    result = rerun_with_subset(cfg, frozenset(survivors))
    return float(result.accuracy[-1].mean())


def run_removal(config: ExperimentConfig) -> ExperimentOutput:
    """Remove k clients chosen by contribution rank, rerun, compare.

    Removal uses the same utility notion the contributions estimate:
    removed clients stop training but keep relaying, so the exchange
    topology and every random draw stay those of the base run.
    """
    cfg = config.to_sim_config()
    base = run_simulation(cfg)
    totals = base.client_totals()
    # ascending contribution; ties broken by id for a stable ranking
    ranking = sorted(range(cfg.n), key=lambda j: (totals[j], j))

    plans: list[tuple[int, str, int, tuple[int, ...]]] = []
    for k in config.removal.k:
        if k >= cfg.n:
            raise ValueError(f"cannot remove {k} of {cfg.n} clients")
        for order in config.removal.orders:
            if order == "low":
                removals = [tuple(ranking[:k])]
            elif order == "high":
                removals = [tuple(ranking[-k:])]
            else:
                removals = []
                for repeat in range(config.removal.random_repeats):
                    rng = np.random.default_rng(stream(cfg.seed, STREAM_REMOVAL, k, repeat))
                    removals.append(tuple(sorted(
                        int(j) for j in rng.choice(cfg.n, size=k, replace=False)
                    )))
            for repeat, removed in enumerate(removals):
                plans.append((k, order, repeat, removed))

    honest_cfg = dataclasses.replace(cfg, dishonest=(), profile=None)
    tasks = []
    for k, order, repeat, removed in plans:
        survivors = tuple(j for j in range(cfg.n) if j not in removed)
        tasks.append((honest_cfg, survivors))
    accuracies = _map_ordered(_survivor_accuracy, tasks, config.workers)

    rows = []
    means: dict[int, dict[str, list[float]]] = {}
    for (k, order, repeat, removed), acc in zip(plans, accuracies):
        rows.append([k, order, repeat, ";".join(str(j) for j in removed), acc])
        means.setdefault(k, {}).setdefault(order, []).append(acc)
    mean_table = {
        str(k): {order: float(np.mean(vals)) for order, vals in orders.items()}
        for k, orders in means.items()
    }
    files = {
        "removal.csv": _csv_file(
            ["k", "order", "repeat", "removed", "final_accuracy_mean"], rows
        ),
        "removal.json": _json_file({
            "name": config.name,
            "config": _config_echo(config),
            "ranking_ascending": ranking,
            "contribution_totals": totals,
            "base_final_accuracy_mean": float(base.accuracy[-1].mean()),
            "means": mean_table,
        }),
    }
    summary = {"name": config.name, "means": mean_table}
    return ExperimentOutput(files=files, summary=summary)


def run_correlation(config: ExperimentConfig) -> ExperimentOutput:
    """Correlate consensus contributions with a per-client data factor."""
    cfg = config.to_sim_config()
    factor = config.correlation.factor
    if factor == "size" and cfg.distribution.kind != "sizes":
        raise ValueError("correlation factor size requires data.kind sizes")
    if factor == "noise" and cfg.distribution.kind != "noisy-images":
        raise ValueError("correlation factor noise requires data.kind noisy-images")
    result = run_simulation(cfg)
    shards, _, _, _ = materialize_data(cfg)
    if factor == "size":
        x = np.array([float(len(s)) for s in shards])
    else:
        x = np.array(cfg.distribution.sigmas, dtype=np.float64)
    y = result.client_totals()
    try:
        r = pearson(x, y)
        undefined_reason = None
    except ValueError as err:
        r = None
        undefined_reason = str(err)
    files = {
        "correlation.csv": _csv_file(
            ["client", "factor_value", "contribution"],
            [[j, float(x[j]), float(y[j])] for j in range(cfg.n)],
        ),
        "correlation.json": _json_file({
            "name": config.name,
            "config": _config_echo(config),
            "factor": factor,
            "pearson": r,
            "undefined_reason": undefined_reason,
            "final_accuracy_mean": float(result.accuracy[-1].mean()),
        }),
    }
    summary = {"name": config.name, "factor": factor, "pearson": r}
    return ExperimentOutput(files=files, summary=summary)


def _scenario_profile(section, scenario: str) -> AdversaryProfile:
    return AdversaryProfile(
        fake_pretrain="d1" in scenario,
        fake_report="d2" in scenario,
        pre_generator=section.pre_generator,
        pre_sigma=section.pre_sigma,
        report_mode=section.report_mode,
        report_value=section.report_value,
        report_multiplier=section.report_multiplier,
        report_offset=section.report_offset,
    )


def _sim_group_means(args: tuple[SimConfig, tuple[int, ...]]) -> tuple[float, float, float, int]:
    cfg, roster = args
    result = run_simulation(cfg)
    totals = result.client_totals()
    mask = np.zeros(cfg.n, dtype=bool)
    mask[list(roster)] = True
    dishonest_mean = float(totals[mask].mean()) if mask.any() else float("nan")
    honest_mean = float(totals[~mask].mean()) if (~mask).any() else float("nan")
    replaced_rounds = sum(1 for log in result.round_logs if log.outlier_replaced)
    return (
        dishonest_mean,
        honest_mean,
        float(result.accuracy[-1].mean()),
        replaced_rounds,
    )


def run_dishonest(config: ExperimentConfig) -> ExperimentOutput:
    """Attack scenarios with and without countermeasures, plus an
    all-honest baseline on the same seed and roster for reference."""
    roster = config.roster()
    if not roster:
        raise ValueError("dishonest experiment requires a non-empty adversary roster")
    base_cfg = dataclasses.replace(
        config.to_sim_config(), dishonest=(), profile=None,
        enable_c1=False, enable_c2=False,
    )
    plans: list[tuple[str, bool]] = [("honest", False)]
    for scenario in config.dishonest.scenarios:
        plans.append((scenario, False))
        plans.append((scenario, True))
    tasks = []
    for scenario, with_cm in plans:
        if scenario == "honest":
            tasks.append((base_cfg, roster))
            continue
        profile = _scenario_profile(config.adversary, scenario)
        cfg = dataclasses.replace(
            base_cfg,
            dishonest=roster,
            profile=profile,
            enable_c1=with_cm and profile.fake_pretrain,
            enable_c2=with_cm and profile.fake_report,
        )
        tasks.append((cfg, roster))
    outcomes = _map_ordered(_sim_group_means, tasks, config.workers)

    runs = []
    rows = []
    baseline = None
    for (scenario, with_cm), (dis_mean, hon_mean, acc, replaced_rounds) in zip(plans, outcomes):
        entry = {
            "scenario": scenario,
            "countermeasures": with_cm,
            "dishonest_mean": dis_mean,
            "honest_mean": hon_mean,
            "final_accuracy_mean": acc,
            "rounds_with_replacements": replaced_rounds,
        }
        if scenario == "honest":
            baseline = entry
        else:
            runs.append(entry)
        rows.append([
            scenario, "on" if with_cm else "off",
            dis_mean, hon_mean, acc,
        ])
    files = {
        "dishonest.csv": _csv_file(
            ["scenario", "countermeasures", "dishonest_mean", "honest_mean",
             "final_accuracy_mean"], rows
        ),
        "dishonest.json": _json_file({
            "name": config.name,
            "config": _config_echo(config),
            "roster": list(roster),
            "baseline": baseline,
            "runs": runs,
        }),
    }
    summary = {
        "name": config.name,
        "roster": list(roster),
        "baseline_dishonest_mean": baseline["dishonest_mean"],
        "runs": [
            {
                "scenario": e["scenario"],
                "countermeasures": e["countermeasures"],
                "dishonest_mean": e["dishonest_mean"],
                "honest_mean": e["honest_mean"],
            }
            for e in runs
        ],
    }
    return ExperimentOutput(files=files, summary=summary)


RUNNERS = {
    "simulate": run_simulate,
    "shapley": run_shapley,
    "removal": run_removal,
    "correlation": run_correlation,
    "dishonest": run_dishonest,
}
