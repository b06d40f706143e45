"""End-to-end workflow driver over the simulated oracle network and ledger.

One run covers: request recording, oracle fan-out, aggregation, plan
storage, and sequential task assignment/completion, all on a virtual
clock so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .aggregation import ReputationTable, RoundRecord, run_round
from .ledger import (Ledger, OracleContract, PlanEmpty, PlannerContract)
from .oracles import (AllOraclesTimedOut, NetworkConfig, OracleResponse,
                      gather_responses)
from .plans import Plan, RobotRegistry, scenario_registry

DEFAULT_TASK_EXEC_MS = 500.0
DEFAULT_TASK_TIMEOUT_MS = 10_000.0


class WorkflowError(Exception):
    def __init__(self, step: int, message: str):
        super().__init__(f"workflow step {step}: {message}")
        self.step = step


class VirtualClock:
    """Monotonic simulated-milliseconds clock; no wall-clock sleeping."""

    def __init__(self, start_ms: float = 0.0):
        self.now_ms = float(start_ms)

    def advance(self, delta_ms: float) -> float:
        if delta_ms < 0:
            raise ValueError("cannot advance the clock backwards")
        self.now_ms += delta_ms
        return self.now_ms


@dataclass
class WorkflowTrace:
    case_id: int
    request_id: str | None
    status: str  # done | stalled | aborted
    events: list[dict] = field(default_factory=list)
    responses: list[OracleResponse] = field(default_factory=list)
    round_record: RoundRecord | None = None
    executed: list[str] = field(default_factory=list)  # tokens, assignment order


@dataclass
class SimEnvironment:
    """Shared state across the cases of one experiment run."""

    registry: RobotRegistry
    ledger: Ledger
    planner: PlannerContract
    oracle_sc: OracleContract
    clock: VirtualClock

    @classmethod
    def fresh(cls, registry: RobotRegistry | None = None) -> "SimEnvironment":
        registry = registry or scenario_registry()
        ledger = Ledger()
        planner = PlannerContract(ledger, registry)
        oracle_sc = OracleContract(ledger, planner)
        return cls(registry, ledger, planner, oracle_sc, VirtualClock())


def run_workflow(case, network: NetworkConfig, metric, table: ReputationTable,
                 env: SimEnvironment, *,
                 seed: int | None = None,
                 timeout_ms: float | None = None,
                 task_exec_ms: float = DEFAULT_TASK_EXEC_MS,
                 org: str = "O2",
                 round_index: int | None = None,
                 responder=None) -> WorkflowTrace:
    """Drive one benchmark case through the full eight-step workflow.

    `responder`, when given, replaces the simulated oracle fan-out (used for
    live mode); it takes the case and returns a list of OracleResponse.
    """
    clock = env.clock
    trace = WorkflowTrace(case_id=case.id, request_id=None, status="aborted")
    events = trace.events

    events.append({"step": 1, "kind": "user_request", "case": case.id})

    request_id, block = env.oracle_sc.record_request(case.intent, org, clock.now_ms)
    trace.request_id = request_id
    events.append({"step": 2, "kind": "record_request",
                   "request_id": request_id, "block": block.index})

    try:
        if responder is not None:
            responses = responder(case)
        else:
            responses = gather_responses(network, case, timeout_ms, seed, env.registry)
    except AllOraclesTimedOut as exc:
        events.append({"step": 4, "kind": "abort", "reason": str(exc)})
        return trace
    trace.responses = responses

    effective_timeout = network.timeout_ms if timeout_ms is None else timeout_ms
    delivered = [r.latency_ms for r in responses if not r.missing]
    clock.advance(max(delivered) if len(delivered) == len(responses)
                  else effective_timeout)

    summary = [{"oracle": r.oracle_id, "latency_ms": r.latency_ms,
                "missing": r.missing} for r in responses]
    events.append({"step": 3, "kind": "responses", "responses": summary})
    env.oracle_sc.record_responses(request_id, summary, clock.now_ms)

    # Missing responses enter aggregation as empty plans so the matrix keeps
    # its dimensions and the silent oracle is consensus-penalized.
    round_plans = [(r.oracle_id, r.plan if r.plan is not None else Plan())
                   for r in responses]
    try:
        record = run_round(case.intent, round_plans, metric, table, round_index)
    except Exception as exc:
        raise WorkflowError(4, f"aggregation failed: {exc}") from exc
    trace.round_record = record
    events.append({"step": 4, "kind": "aggregate",
                   "selected_oracle": record.selected_oracle,
                   "consensus": list(record.consensus)})
    events.append({"step": 5, "kind": "submit_plan",
                   "plan": record.selected_plan().tokens()})

    try:
        block = env.oracle_sc.store_plan(request_id, record, clock.now_ms)
    except PlanEmpty as exc:
        events.append({"step": 6, "kind": "abort", "reason": str(exc)})
        return trace
    events.append({"step": 6, "kind": "store_plan", "block": block.index})
    events.append({"step": 7, "kind": "planner_init", "request_id": request_id})

    # Each simulated robot endpoint reports success after a fixed execution
    # time; cases run sequentially so robot contention cannot arise here.
    while True:
        status, block = env.planner.assign_next(request_id, clock.now_ms)
        if status == "done":
            break
        if status == "busy":
            raise WorkflowError(8, "robot busy outside sequential execution")
        payload = block.payload
        events.append({"step": 8, "kind": "assign", "seq": payload["seq"],
                       "robot": payload["robot"], "skill": payload["skill"]})
        trace.executed.append(f"{payload['robot']}:{payload['skill']}")
        clock.advance(task_exec_ms)
        env.planner.complete_task(request_id, payload["seq"], "success", clock.now_ms)
        events.append({"step": 8, "kind": "complete", "seq": payload["seq"],
                       "status": "success"})

    trace.status = "stalled" if env.planner.is_stalled(request_id) else "done"
    events.append({"kind": "finished", "status": trace.status})
    return trace
