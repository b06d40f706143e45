"""Acceptance gate: one test per criterion, each printing PASS/FAIL.

Criteria cover LCS correctness, order-sensitivity, baseline order-blindness,
Byzantine selection and reputation divergence, consensus/reputation bounds,
the order-agnostic failure mode, ledger integrity, determinism, and latency
reporting. Criterion 11 (live mode) only runs when live credentials are
configured and is not CI-gating.
"""

import csv
import dataclasses
import itertools
import json
import os
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import adversarial_oracle, benign_oracle, network_dict, write_network
from planchain.aggregation import ReputationTable, run_round
from planchain.benchmark import generate_benchmark
from planchain.ledger import verify_chain
from planchain.oracles import gather_responses, network_from_dict
from planchain.plans import Plan, SubTask, scenario_registry
from planchain.reports import (ExperimentConfig, accuracy_vs_ground_truth,
                               run_experiment)
from planchain.similarity import (_lcs_kernel, embedding_similarity, get_metric,
                                  lcs_length, lcs_similarity, tfidf_similarity)

try:
    from numba import njit
except ImportError:
    njit = None

REGISTRY = scenario_registry()
STEPS = REGISTRY.all_steps()  # the 9 scenario (robot, skill) pairs


@contextmanager
def criterion(capsys, number, description, budget_s=None):
    start = time.monotonic()
    try:
        yield
        elapsed = time.monotonic() - start
        if budget_s is not None:
            assert elapsed < budget_s, (
                f"criterion {number} took {elapsed:.1f}s, budget {budget_s}s")
    except BaseException:
        with capsys.disabled():
            print(f"FAIL criterion {number}: {description}")
        raise
    with capsys.disabled():
        print(f"PASS criterion {number}: {description} ({elapsed:.2f}s)")


def brute_lcs(a, b):
    """Reference oracle: longest subsequence of `a` also a subsequence of `b`."""
    best = 0
    for r in range(len(a), best, -1):
        for combo in itertools.combinations(a, r):
            it = iter(b)
            if all(x in it for x in combo):
                return r
    return best


def random_plan(rng, length, distinct=False):
    pick = rng.sample if distinct else rng.choices
    return Plan(tuple(pick(STEPS, k=length)))


# --------------------------------------------------------------------------
# Criterion 1: exact LCS vs brute-force oracle
# --------------------------------------------------------------------------

def masks_by_popcount(max_len):
    """Row k: all k-bit masks, largest popcount first (for early exit)."""
    rows = np.zeros((max_len + 1, 1 << max_len), np.int64)
    for k in range(max_len + 1):
        order = sorted(range(1 << k), key=lambda m: -bin(m).count("1"))
        rows[k, :1 << k] = order
    return rows


if njit is not None:
    @njit(cache=True)
    def _brute_kernel(a, la, b, lb, order):
        # exhaustive: try every subsequence of `a`, biggest first; the first
        # one that is also a subsequence of `b` is the LCS
        for m in range(1 << la):
            mask = order[la, m]
            count = 0
            j = 0
            ok = True
            for i in range(la):
                if mask >> i & 1:
                    while j < lb and b[j] != a[i]:
                        j += 1
                    if j == lb:
                        ok = False
                        break
                    j += 1
                    count += 1
            if ok:
                return count
        return 0

    @njit(cache=True)
    def _sweep(seqs, lens, order):
        mismatches = 0
        n = seqs.shape[0]
        for i in range(n):
            a = seqs[i, :lens[i]]
            for j in range(i, n):
                b = seqs[j, :lens[j]]
                if _lcs_kernel(a, b) != _brute_kernel(a, lens[i], b, lens[j],
                                                      order):
                    mismatches += 1
        return mismatches


def enumerate_sequences(max_len, alphabet):
    rows = [()]
    for n in range(1, max_len + 1):
        rows.extend(itertools.product(range(alphabet), repeat=n))
    seqs = np.zeros((len(rows), max_len), np.int64)
    lens = np.zeros(len(rows), np.int64)
    for i, row in enumerate(rows):
        lens[i] = len(row)
        seqs[i, :len(row)] = row
    return seqs, lens


@pytest.mark.skipif(njit is None, reason="numba required for the exhaustive sweep")
def test_criterion_1_lcs_formula(capsys):
    seqs, lens = enumerate_sequences(7, 3)
    order = masks_by_popcount(10)
    # compile outside the timed region
    _sweep(seqs[:2], lens[:2], order)

    with criterion(capsys, 1, "LCS exact vs brute force (exhaustive <=7 "
                   "over 3 symbols + 500 random <=10)", budget_s=10):
        assert _sweep(seqs, lens, order) == 0

        from planchain.similarity import encode_pair
        rng = random.Random(1)
        for k in range(500):
            a = random_plan(rng, rng.randint(0, 10))
            b = random_plan(rng, rng.randint(0, 10))
            xa, xb = encode_pair(a, b)
            ref = int(_brute_kernel(xa, len(xa), xb, len(xb), order))
            if k % 5 == 0:  # independent pure-Python oracle on a subsample
                assert brute_lcs(list(a), list(b)) == ref
            assert lcs_length(a, b) == ref
            if a or b:
                assert lcs_similarity(a, b) == ref / max(len(a), len(b))
            else:
                assert lcs_similarity(a, b) == 1.0


def test_criterion_2_identity_and_reversal(capsys):
    with criterion(capsys, 2, "sim(p,p)=1 and sim(p,reverse(p))=1/|p| "
                   "for lengths 2-10", budget_s=1):
        rng = random.Random(2)
        extra = [SubTask(f"R{i}", f"S{i}") for i in range(10)]
        for n in range(2, 11):
            steps = (rng.sample(STEPS, n) if n <= len(STEPS)
                     else rng.sample(STEPS + extra, n))
            plan = Plan(tuple(steps))
            assert lcs_similarity(plan, plan) == 1.0
            assert lcs_similarity(plan, plan.reversed()) == 1 / n


def test_criterion_3_baseline_order_blindness(capsys):
    with criterion(capsys, 3, "TF-IDF and embedding invariant to permutation "
                   "while LCS < 1", budget_s=5):
        rng = random.Random(3)
        for _ in range(200):
            plan = random_plan(rng, rng.randint(2, 9), distinct=True)
            perm = list(plan)
            while True:
                rng.shuffle(perm)
                if tuple(perm) != plan.steps:
                    break
            permuted = Plan(tuple(perm))
            corpus = [plan, permuted]
            assert tfidf_similarity(plan, permuted, corpus) == pytest.approx(
                1.0, abs=1e-12)
            assert embedding_similarity(plan, permuted) == pytest.approx(
                1.0, abs=1e-12)
            assert lcs_similarity(plan, permuted) < 1.0


# --------------------------------------------------------------------------
# Criteria 4-5: Byzantine selection and reputation divergence
# --------------------------------------------------------------------------

ATTACKS = {
    "append_step": {"kind": "append_step", "step": "Iris:Photograph"},
    "reorder_swap": {"kind": "reorder_swap", "count": 1},
    "substitute_step": {"kind": "substitute_step", "step": "Iris:Photograph",
                        "position": "last"},
    "truncate_tail": {"kind": "truncate_tail", "count": 1},
}
ATTACKER = 3


def run_attack_campaign(attack, metric_name="lcs", attacker_id=ATTACKER):
    """30 benchmark rounds with 3 exact-benign oracles and 1 attacker."""
    oracles = [adversarial_oracle(i, attack) if i == attacker_id
               else benign_oracle(i) for i in range(4)]
    net = network_from_dict(network_dict(oracles))
    table = ReputationTable(range(4))
    metric = get_metric(metric_name)
    cases = generate_benchmark(30, 7)
    records = []
    gaps = {}
    for rnd, case in enumerate(cases, 1):
        responses = gather_responses(net, case, None, 7, REGISTRY)
        plans = [(r.oracle_id, r.plan if r.plan is not None else Plan())
                 for r in responses]
        records.append(run_round(case.intent, plans, metric, table, rnd))
        if rnd in (5, 30):
            reps = table.values()
            benign = [v for k, v in reps.items() if k != attacker_id]
            gaps[rnd] = min(benign) - reps[attacker_id]
    return cases, records, table, gaps


@pytest.fixture(scope="module")
def attack_campaigns():
    start = time.monotonic()
    results = {name: run_attack_campaign(attack)
               for name, attack in ATTACKS.items()}
    return results, time.monotonic() - start


def test_criterion_4_byzantine_never_selected(capsys, attack_campaigns):
    results, elapsed = attack_campaigns
    # the campaigns are shared with criterion 5, so their time counts here
    assert elapsed < 10, f"campaigns took {elapsed:.1f}s, budget 10s"
    try:
        for name, (_, records, _, _) in results.items():
            picks = sum(r.selected_oracle == ATTACKER for r in records)
            assert picks == 0, f"{name}: attacker selected in {picks}/30 rounds"
    except BaseException:
        with capsys.disabled():
            print("FAIL criterion 4: attacker selected 0/30 under LCS")
        raise
    with capsys.disabled():
        print(f"PASS criterion 4: attacker selected 0/30 rounds under LCS for "
              f"all four attacks ({elapsed:.2f}s)")


def test_criterion_5_reputation_divergence(capsys, attack_campaigns):
    results, _ = attack_campaigns
    with criterion(capsys, 5, "attacker reputation below all benign after "
                   "round 30; gap(30) > gap(5)"):
        for name, (_, _, table, gaps) in results.items():
            reps = table.values()
            for oid in range(3):
                assert reps[ATTACKER] < reps[oid], name
            assert gaps[30] > gaps[5], (
                f"{name}: gap(30)={gaps[30]:.4f} <= gap(5)={gaps[5]:.4f}")


def test_criterion_6_bounds(capsys):
    with criterion(capsys, 6, "consensus in [0,4] (>=1 when non-empty) and "
                   "reputation in [0,4] over 1000 random rounds", budget_s=30):
        rng = random.Random(6)
        table = ReputationTable(range(4))
        metric = get_metric("lcs")
        for rnd in range(1, 1001):
            plans = [(i, random_plan(rng, rng.randint(0, 7))) for i in range(4)]
            record = run_round(f"intent {rnd}", plans, metric, table, rnd)
            for (_, plan), c in zip(plans, record.consensus):
                assert 0.0 <= c <= 4.0
                if plan:
                    assert c >= 1.0
            for rep in table.values().values():
                assert 0.0 <= rep <= 4.0


def test_criterion_7_order_agnostic_failure_mode(capsys):
    with criterion(capsys, 7, "under TF-IDF a reorder attacker keeps accuracy "
                   "1.0 yet gets selected", budget_s=10):
        attacker_id = 0
        cases, records, _, _ = run_attack_campaign(
            ATTACKS["reorder_swap"], metric_name="tfidf",
            attacker_id=attacker_id)
        attacker_wins = 0
        for case, record in zip(cases, records):
            round_plans = list(record.plans)
            for plan in round_plans:
                acc = accuracy_vs_ground_truth(plan, case.ground_truth,
                                               round_plans)
                assert acc["tfidf"] == pytest.approx(1.0, abs=1e-12)
            attacker_wins += record.selected_oracle == attacker_id
        assert attacker_wins >= 1


# --------------------------------------------------------------------------
# Criteria 8-10: workflow/ledger integrity, determinism, latency reporting
# --------------------------------------------------------------------------

def standard_experiment(tmp_path, out_name, oracles=None, **net_extra):
    bench = tmp_path / "bench.jsonl"
    if not bench.exists():
        from planchain.benchmark import write_benchmark
        write_benchmark(generate_benchmark(30, 7), bench)
    oracles = oracles or ([benign_oracle(i) for i in range(3)] +
                          [adversarial_oracle(3, ATTACKS["append_step"])])
    net = write_network(tmp_path / f"{out_name}-net.json",
                        network_dict(oracles, **net_extra))
    config = ExperimentConfig(benchmark_path=str(bench), network_path=str(net),
                              seed=7, out_dir=str(tmp_path / out_name))
    return run_experiment(config)


def test_criterion_8_ledger_integrity(capsys, tmp_path):
    with criterion(capsys, 8, "chain verifies, 50 tampers detected at the "
                   "right block, sequential execution matches ground truth",
                   budget_s=20):
        result = standard_experiment(tmp_path, "run8")
        blocks = result.env.ledger.blocks
        assert verify_chain(blocks) is None

        rng = random.Random(8)
        for _ in range(50):
            idx = rng.randrange(len(blocks))
            payload = blocks[idx].payload_json
            pos = rng.randrange(len(payload))
            old = payload[pos]
            new = rng.choice([c for c in "abcdefghij0123456789" if c != old])
            tampered = list(blocks)
            tampered[idx] = dataclasses.replace(
                blocks[idx], payload_json=payload[:pos] + new + payload[pos + 1:])
            violation = verify_chain(tampered)
            assert violation is not None and violation.index == idx

        truth = {c.id: c.ground_truth.tokens() for c in result.cases}
        for trace in result.traces:
            assert trace.status == "done"
            assert trace.executed == truth[trace.case_id]
            cursor = 0
            for event in trace.events:
                if event.get("kind") == "assign":
                    assert event["seq"] == cursor
                elif event.get("kind") == "complete":
                    assert event["seq"] == cursor
                    cursor += 1


def test_criterion_9_determinism(capsys, tmp_path):
    with criterion(capsys, 9, "identical inputs give byte-identical "
                   "rounds.jsonl and ledger.jsonl", budget_s=20):
        a = standard_experiment(tmp_path, "run9a")
        b = standard_experiment(tmp_path, "run9b")
        for name in ("rounds.jsonl", "ledger.jsonl"):
            assert ((a.out_dir / name).read_bytes() ==
                    (b.out_dir / name).read_bytes()), name


def test_criterion_10_latency_reporting(capsys, tmp_path):
    import math

    with criterion(capsys, 10, "latency.csv means within 10% of configured "
                   "LogNormal means; timeouts depress consensus", budget_s=10):
        mu, sigma = math.log(2000.0), 0.2
        expected = math.exp(mu + sigma ** 2 / 2)
        oracles = [benign_oracle(i, latency={"kind": "lognormal", "mu": mu,
                                             "sigma": sigma})
                   for i in range(4)]
        result = standard_experiment(tmp_path, "run10", oracles=oracles,
                                     timeout_ms=60_000)
        with open(result.out_dir / "latency.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        for row in rows:
            assert int(row["count"]) == 30 and int(row["missing"]) == 0
            assert abs(float(row["mean_ms"]) - expected) <= 0.10 * expected

        # a response past the timeout becomes Missing and is penalized
        slow = [benign_oracle(i) for i in range(3)] + [
            benign_oracle(3, latency={"kind": "fixed", "ms": 9000})]
        net = network_from_dict(network_dict(slow, timeout_ms=5000))
        case = generate_benchmark(1, 7)[0]
        responses = gather_responses(net, case, None, 7, REGISTRY)
        assert responses[3].missing
        plans = [(r.oracle_id, r.plan if r.plan is not None else Plan())
                 for r in responses]
        record = run_round(case.intent, plans, get_metric("lcs"),
                           ReputationTable(range(4)), 1)
        assert record.consensus[3] < min(record.consensus[:3])


LIVE_CONFIG = os.environ.get("PLANCHAIN_LIVE_CONFIG")


@pytest.mark.skipif(
    not LIVE_CONFIG,
    reason="criterion 11 is optional: set PLANCHAIN_LIVE_CONFIG to a network "
           "JSON with per-oracle 'live' sections and export ORACLE_API_KEY_<ID>")
def test_criterion_11_live_mode(capsys, tmp_path):
    from planchain.cli import main

    with criterion(capsys, 11, "3-case live run completes with a valid ledger"):
        bench = tmp_path / "live-bench.jsonl"
        from planchain.benchmark import write_benchmark
        write_benchmark(generate_benchmark(3, 7), bench)
        out = tmp_path / "live-out"
        code = main(["run", "--mode", "live", "--benchmark", str(bench),
                     "--network", LIVE_CONFIG, "--seed", "7", "--out", str(out)])
        assert code == 0
        assert main(["verify", "--ledger", str(out / "ledger.jsonl")]) == 0
