import dataclasses
import hashlib

import pytest

from planchain.aggregation import ReputationTable, run_round
from planchain.ledger import (DuplicatePlan, EmptyIntent, Ledger, OracleContract,
                              OutOfOrderCompletion, PlanEmpty, PlannerContract,
                              UnknownOrganization, UnknownRequest,
                              LedgerFormatError, export_ledger, load_ledger,
                              replay, verify_chain)
from planchain.plans import Plan, scenario_registry
from planchain.similarity import LcsMetric

STEPS = scenario_registry().all_steps()
PLAN = Plan(tuple(STEPS[:4]))
OTHER = Plan(tuple(STEPS[4:8]))


@pytest.fixture
def contracts():
    registry = scenario_registry()
    ledger = Ledger()
    planner = PlannerContract(ledger, registry)
    return ledger, planner, OracleContract(ledger, planner)


def make_record(plans=None):
    table = ReputationTable([0, 1, 2, 3])
    plans = plans or [PLAN, PLAN, PLAN, OTHER]
    return run_round("move the crate", list(enumerate(plans)), LcsMetric(), table)


def test_record_request_hash(contracts):
    _, _, oracle_sc = contracts
    intent = "move the crate to the paint shop"
    _, block = oracle_sc.record_request(intent, "O2", 0.0)
    assert block.payload["request_hash"] == \
        hashlib.sha256(intent.encode("utf-8")).hexdigest()


def test_record_request_errors(contracts):
    _, _, oracle_sc = contracts
    with pytest.raises(EmptyIntent):
        oracle_sc.record_request("", "O2", 0.0)
    with pytest.raises(UnknownOrganization):
        oracle_sc.record_request("x", "O9", 0.0)


def test_store_plan_and_duplicate(contracts):
    _, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    record = make_record()
    oracle_sc.store_plan(rid, record, 1.0)
    assert not planner.is_done(rid)
    with pytest.raises(DuplicatePlan):
        oracle_sc.store_plan(rid, record, 2.0)


def test_store_plan_unknown_request(contracts):
    _, _, oracle_sc = contracts
    with pytest.raises(UnknownRequest):
        oracle_sc.store_plan("req-99999", make_record(), 0.0)


def test_store_plan_rejects_empty(contracts):
    _, _, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    record = make_record([Plan(), Plan(), Plan(), Plan()])
    with pytest.raises(PlanEmpty):
        oracle_sc.store_plan(rid, record, 1.0)


def test_sequential_assignment(contracts):
    _, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    oracle_sc.store_plan(rid, make_record(), 1.0)

    for seq in range(len(PLAN)):
        status, block = planner.assign_next(rid, float(seq))
        assert status == "assigned"
        payload = block.payload
        assert payload["seq"] == seq
        assert payload["robot"] == PLAN[seq].robot
        # the assigned robot is busy until completion
        assert not planner.registry.is_free(PLAN[seq].robot)
        planner.complete_task(rid, seq, "success", float(seq) + 0.5)
        assert planner.registry.is_free(PLAN[seq].robot)
    assert planner.assign_next(rid, 99.0) == ("done", None)
    assert planner.is_done(rid)


def test_out_of_order_completion(contracts):
    _, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    oracle_sc.store_plan(rid, make_record(), 1.0)
    planner.assign_next(rid, 2.0)
    with pytest.raises(OutOfOrderCompletion):
        planner.complete_task(rid, 2, "success", 3.0)


def test_timeout_stalls_intent(contracts):
    _, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    oracle_sc.store_plan(rid, make_record(), 1.0)
    _, block = planner.assign_next(rid, 2.0)
    robot = block.payload["robot"]
    planner.complete_task(rid, 0, "timeout", 3.0)
    assert planner.is_stalled(rid)
    assert planner.registry.is_free(robot)


def test_chain_verifies_and_detects_payload_tamper(contracts):
    ledger, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    oracle_sc.store_plan(rid, make_record(), 1.0)
    for seq in range(len(PLAN)):
        planner.assign_next(rid, float(seq))
        planner.complete_task(rid, seq, "success", float(seq) + 0.5)
    assert len(ledger.blocks) == 10
    assert verify_chain(ledger.blocks) is None

    tampered = list(ledger.blocks)
    text = tampered[4].payload_json
    flipped = text[:5] + chr((ord(text[5]) + 1) % 128) + text[6:]
    tampered[4] = dataclasses.replace(tampered[4], payload_json=flipped)
    violation = verify_chain(tampered)
    assert violation.index == 4 and violation.reason == "PayloadHashMismatch"


def test_chain_detects_splice(contracts):
    ledger, planner, oracle_sc = contracts
    for i in range(5):
        oracle_sc.record_request(f"intent {i}", "O2", float(i))
    spliced = ledger.blocks[:2] + ledger.blocks[3:]  # drop block 2
    violation = verify_chain(spliced)
    assert violation.index == 2 and violation.reason == "PrevHashMismatch"


def test_export_load_roundtrip(tmp_path, contracts):
    ledger, _, oracle_sc = contracts
    for i in range(3):
        oracle_sc.record_request(f"intent {i}", "O2", float(i))
    path = tmp_path / "ledger.jsonl"
    export_ledger(ledger.blocks, path)
    loaded = load_ledger(path)
    assert loaded == ledger.blocks
    assert verify_chain(loaded) is None


def test_load_ledger_format_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"index": 0}\n')
    with pytest.raises(LedgerFormatError) as info:
        load_ledger(path)
    assert info.value.line == 1


def test_replay_reproduces_final_state(contracts):
    ledger, planner, oracle_sc = contracts
    rid, _ = oracle_sc.record_request("do it", "O2", 0.0)
    oracle_sc.record_responses(rid, [{"oracle": 0, "latency_ms": 5.0,
                                      "missing": False}], 0.5)
    oracle_sc.store_plan(rid, make_record(), 1.0)
    for seq in range(len(PLAN)):
        planner.assign_next(rid, float(seq))
        planner.complete_task(rid, seq, "success", float(seq) + 0.5)

    replayed = replay(ledger.blocks, scenario_registry())
    live = planner.snapshot()
    live["requests"] = oracle_sc.snapshot()["requests"]
    assert replayed == live
