"""Experiment runner and report writers.

One run executes the full workflow for every benchmark case and writes:
rounds.jsonl, ledger.jsonl, trace.jsonl, accuracy.csv, reputation.csv,
latency.csv, matrices/case-<id>.csv, and report.json.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import ReputationTable
from .benchmark import BenchmarkCase, load_benchmark
from .canon import canonical_json, quantize
from .ledger import export_ledger
from .oracles import NetworkConfig, load_network_config
from .plans import Plan, scenario_registry
from .similarity import (embedding_similarity, get_metric, lcs_similarity,
                         tfidf_similarity)
from .workflow import SimEnvironment, WorkflowTrace, run_workflow

REPUTATION_HEADER = ["round", "oracle", "consensus", "reputation", "selected"]
ACCURACY_HEADER = ["case", "oracle", "lcs", "tfidf", "embedding"]
LATENCY_HEADER = ["oracle", "label", "count", "missing",
                  "mean_ms", "p50_ms", "p95_ms", "max_ms"]


@dataclass
class ExperimentConfig:
    benchmark_path: str
    network_path: str
    metrics: list[str] = field(default_factory=lambda: ["lcs"])
    seed: int | None = None
    out_dir: str = "out"
    mode: str = "sim"  # sim | live
    timeout_ms: float | None = None
    parallel: bool = False

    def __post_init__(self):
        if not self.metrics:
            raise ValueError("at least one metric must be selected")
        if self.mode == "sim" and self.seed is None:
            raise ValueError("sim mode requires a seed")


@dataclass
class ExperimentResult:
    traces: list[WorkflowTrace]
    cases: list[BenchmarkCase]
    network: NetworkConfig
    table: ReputationTable
    env: SimEnvironment
    out_dir: Path


def _fmt(x: float) -> str:
    return repr(quantize(float(x)))


def _percentile(sorted_values: list[float], q: float) -> float:
    # nearest-rank on a pre-sorted list
    if not sorted_values:
        return float("nan")
    idx = max(0, math.ceil(q * len(sorted_values)) - 1)
    return sorted_values[idx]


def accuracy_vs_ground_truth(plan: Plan | None, truth: Plan,
                             round_plans: list[Plan]) -> dict[str, float]:
    """All three metrics against ground truth; a missing plan scores 0."""
    if plan is None:
        plan = Plan()
    corpus = [truth, plan] + list(round_plans)
    return {
        "lcs": lcs_similarity(plan, truth),
        "tfidf": tfidf_similarity(plan, truth, corpus),
        "embedding": embedding_similarity(plan, truth),
    }


def run_experiment(config: ExperimentConfig, *,
                   live_responder=None) -> ExperimentResult:
    """Run every case in file order and write all report artifacts."""
    registry = scenario_registry()
    cases = load_benchmark(config.benchmark_path, registry)
    network = load_network_config(config.network_path, registry)
    seed = network.seed if config.seed is None else config.seed
    metric = get_metric(config.metrics[0])

    responder = live_responder
    if config.parallel and config.mode == "sim" and live_responder is None:
        # Responses are pure functions of (seed, case, oracle), so they can
        # be precomputed concurrently; aggregation stays sequential and the
        # outputs are byte-identical to a sequential run.
        from concurrent.futures import ThreadPoolExecutor
        from .oracles import gather_responses

        def fan_out(case):
            try:
                return gather_responses(network, case, config.timeout_ms,
                                        seed, registry)
            except Exception as exc:
                return exc

        with ThreadPoolExecutor() as pool:
            cached = dict(zip((c.id for c in cases), pool.map(fan_out, cases)))

        def responder(case):
            value = cached[case.id]
            if isinstance(value, Exception):
                raise value
            return value

    env = SimEnvironment.fresh(registry)
    table = ReputationTable([p.id for p in network.oracles])

    traces = []
    for i, case in enumerate(cases):
        trace = run_workflow(case, network, metric, table, env,
                             seed=seed, timeout_ms=config.timeout_ms,
                             round_index=i + 1, responder=responder)
        traces.append(trace)

    result = ExperimentResult(traces=traces, cases=cases, network=network,
                              table=table, env=env, out_dir=Path(config.out_dir))
    write_reports(result, config)
    return result


def write_reports(result: ExperimentResult, config: ExperimentConfig) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "matrices").mkdir(exist_ok=True)

    with open(out / "rounds.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for trace in result.traces:
            if trace.round_record is not None:
                fh.write(trace.round_record.to_json() + "\n")

    export_ledger(result.env.ledger.blocks, out / "ledger.jsonl")

    with open(out / "trace.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for trace in result.traces:
            for event in trace.events:
                fh.write(canonical_json({"case": trace.case_id, **event}) + "\n")

    truth_by_case = {c.id: c.ground_truth for c in result.cases}

    with open(out / "reputation.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPUTATION_HEADER)
        for trace in result.traces:
            rec = trace.round_record
            if rec is None:
                continue
            for oid, c, rep in zip(rec.oracle_ids, rec.consensus, rec.reputation_after):
                w.writerow([rec.round_index, oid, _fmt(c), _fmt(rep),
                            int(oid == rec.selected_oracle)])

    with open(out / "accuracy.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ACCURACY_HEADER)
        for trace in result.traces:
            truth = truth_by_case[trace.case_id]
            round_plans = [r.plan if r.plan is not None else Plan()
                           for r in trace.responses]
            for r in trace.responses:
                acc = accuracy_vs_ground_truth(r.plan, truth, round_plans)
                w.writerow([trace.case_id, r.oracle_id, _fmt(acc["lcs"]),
                            _fmt(acc["tfidf"]), _fmt(acc["embedding"])])

    by_oracle: dict[int, list[float]] = {p.id: [] for p in result.network.oracles}
    missing_count = {p.id: 0 for p in result.network.oracles}
    labels = {p.id: p.label for p in result.network.oracles}
    for trace in result.traces:
        for r in trace.responses:
            by_oracle[r.oracle_id].append(r.latency_ms)
            if r.missing:
                missing_count[r.oracle_id] += 1
    with open(out / "latency.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LATENCY_HEADER)
        for oid, samples in by_oracle.items():
            s = sorted(samples)
            mean = sum(s) / len(s) if s else float("nan")
            w.writerow([oid, labels[oid], len(s), missing_count[oid],
                        _fmt(mean), _fmt(_percentile(s, 0.5)),
                        _fmt(_percentile(s, 0.95)), _fmt(s[-1] if s else float("nan"))])

    for trace in result.traces:
        rec = trace.round_record
        if rec is None:
            continue
        with open(out / "matrices" / f"case-{trace.case_id}.csv", "w",
                  encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "oracle"] + [str(o) for o in rec.oracle_ids])
            for oid, row in zip(rec.oracle_ids, rec.matrix.entries):
                w.writerow([rec.metric_name, oid] + [_fmt(v) for v in row])

    histogram: dict[int, int] = {p.id: 0 for p in result.network.oracles}
    for trace in result.traces:
        if trace.round_record is not None:
            histogram[trace.round_record.selected_oracle] += 1
    report = {
        "mode": config.mode,
        "metrics": config.metrics,
        "aggregation_metric": config.metrics[0],
        "seed": config.seed,
        "cases": len(result.cases),
        "statuses": {s: sum(1 for t in result.traces if t.status == s)
                     for s in ("done", "stalled", "aborted")},
        "selection_histogram": {str(k): v for k, v in histogram.items()},
        "final_reputation": {str(k): quantize(v)
                             for k, v in result.table.values().items()},
    }
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def round_matrices(case: BenchmarkCase, network: NetworkConfig, metrics: list[str],
                   seed: int) -> dict[str, list[list[float]]]:
    """Similarity matrices for one case's round under each selected metric."""
    from .aggregation import build_matrix
    from .oracles import gather_responses

    registry = scenario_registry()
    responses = gather_responses(network, case, None, seed, registry)
    plans = [r.plan if r.plan is not None else Plan() for r in responses]
    out = {}
    for name in metrics:
        matrix = build_matrix(plans, get_metric(name))
        out[name] = [list(row) for row in matrix.entries]
    return out
