"""Command-line harness: run, matrix, gen-benchmark, verify.

Exit codes: 0 success, 2 configuration error, 3 workflow failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .benchmark import (BenchmarkError, generate_benchmark, load_benchmark,
                        write_benchmark)
from .canon import quantize
from .ledger import LedgerFormatError, load_ledger, verify_chain
from .oracles import ConfigError, OracleError, ThreatModelViolation, load_network_config
from .plans import PlanError, scenario_registry
from .reports import ExperimentConfig, round_matrices, run_experiment
from .similarity import METRIC_NAMES
from .workflow import WorkflowError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_WORKFLOW = 3
EXIT_VERIFY = 4


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--benchmark", required=True, help="benchmark JSONL file")
    p.add_argument("--network", required=True, help="network config JSON file")
    p.add_argument("--metric", action="append", choices=METRIC_NAMES,
                   help="similarity metric; repeatable, first one aggregates "
                        "(default: lcs)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (required in sim mode unless the network "
                        "config provides one)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--mode", choices=("sim", "live"), default="sim")
    p.add_argument("--timeout-ms", type=float, default=None,
                   help="override the round timeout")
    p.add_argument("--parallel", action="store_true",
                   help="precompute case responses concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planchain",
        description="Byzantine-tolerant aggregation of robot task plans "
                    "over a simulated oracle network and ledger.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the benchmark end to end")
    _add_run_args(p_run)

    p_matrix = sub.add_parser("matrix", help="similarity matrices for one case")
    _add_run_args(p_matrix)
    p_matrix.add_argument("--case", type=int, required=True, help="case id")

    p_gen = sub.add_parser("gen-benchmark", help="generate a benchmark file")
    p_gen.add_argument("--count", type=int, default=30)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--out", required=True, help="output JSONL path")

    p_verify = sub.add_parser("verify", help="verify an exported ledger")
    p_verify.add_argument("--ledger", required=True, help="ledger JSONL path")

    return parser


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        benchmark_path=args.benchmark,
        network_path=args.network,
        metrics=args.metric or ["lcs"],
        seed=args.seed,
        out_dir=args.out,
        mode=args.mode,
        timeout_ms=args.timeout_ms,
        parallel=args.parallel,
    )


def _live_responder(args):
    import json

    from .llm_client import LiveOracleConfig, PromptTemplate, gather_live_responses

    with open(args.network, encoding="utf-8") as fh:
        raw = json.load(fh)
    configs = []
    for entry in raw.get("oracles", []):
        live = entry.get("live")
        if live is None:
            raise ConfigError(
                f"oracle {entry.get('id')} has no 'live' section for live mode")
        configs.append(LiveOracleConfig.from_dict(int(entry["id"]), live))
    registry = scenario_registry()
    template = PromptTemplate()

    def responder(case):
        return gather_live_responses(configs, template, registry, case.intent)

    return responder


def cmd_run(args) -> int:
    if args.mode == "sim" and args.seed is None:
        # fall back to the network config's seed
        args.seed = load_network_config(args.network).seed
    config = _experiment_config(args)
    responder = _live_responder(args) if config.mode == "live" else None
    result = run_experiment(config, live_responder=responder)
    done = sum(1 for t in result.traces if t.status == "done")
    print(f"ran {len(result.traces)} cases ({done} done) -> {config.out_dir}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    registry = scenario_registry()
    cases = load_benchmark(args.benchmark, registry)
    by_id = {c.id: c for c in cases}
    if args.case not in by_id:
        print(f"error: unknown case {args.case}", file=sys.stderr)
        return EXIT_CONFIG
    network = load_network_config(args.network, registry)
    seed = args.seed if args.seed is not None else network.seed
    metrics = args.metric or ["lcs"]
    matrices = round_matrices(by_id[args.case], network, metrics, seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"matrix-case-{args.case}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        oracle_ids = [p.id for p in network.oracles]
        w.writerow(["metric", "oracle"] + [str(o) for o in oracle_ids])
        for name, rows in matrices.items():
            for oid, row in zip(oracle_ids, rows):
                w.writerow([name, oid] + [repr(quantize(v)) for v in row])
    for name, rows in matrices.items():
        print(f"case {args.case}, metric {name}:")
        for row in rows:
            print("  " + "  ".join(f"{v:6.4f}" for v in row))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_gen_benchmark(args) -> int:
    cases = generate_benchmark(args.count, args.seed)
    write_benchmark(cases, args.out)
    print(f"wrote {len(cases)} cases to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        blocks = load_ledger(args.ledger)
    except LedgerFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    violation = verify_chain(blocks)
    if violation is None:
        print(f"ok: {len(blocks)} blocks, chain intact")
        return EXIT_OK
    print(f"verification failed: block {violation.index}: {violation.reason}",
          file=sys.stderr)
    return EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "matrix": cmd_matrix,
        "gen-benchmark": cmd_gen_benchmark,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ThreatModelViolation, BenchmarkError, PlanError,
            ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WorkflowError, OracleError) as exc:
        print(f"workflow error: {exc}", file=sys.stderr)
        return EXIT_WORKFLOW


if __name__ == "__main__":
    sys.exit(main())
