"""Hash-chained append-only ledger and the two contract state machines.

The oracle contract records requests, oracle responses, and the selected
plan; the planner contract owns the robot registry and walks each stored
plan strictly sequentially, one assignment at a time. Blocks link by
SHA-256 over canonical JSON, so any byte of tampering is detectable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .canon import canonical_json, sha256_hex
from .plans import ARROW, Plan, RobotRegistry, parse_plan

GENESIS_PREV_HASH = "0" * 64

ORGANIZATIONS = ("O1", "O2")  # O1 runs the fleet, O2 is the user base


class LedgerError(Exception):
    pass


class UnknownOrganization(LedgerError):
    pass


class EmptyIntent(LedgerError):
    pass


class UnknownRequest(LedgerError):
    pass


class DuplicatePlan(LedgerError):
    pass


class PlanEmpty(LedgerError):
    pass


class OutOfOrderCompletion(LedgerError):
    pass


class InvalidTransition(LedgerError):
    pass


class LedgerFormatError(LedgerError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# --------------------------------------------------------------------------
# Blocks and chain verification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerBlock:
    index: int
    prev_hash: str
    payload_json: str  # canonical JSON bytes of the transaction
    payload_hash: str
    timestamp_ms: float

    def header_hash(self) -> str:
        header = canonical_json({
            "index": self.index,
            "prev_hash": self.prev_hash,
            "payload_hash": self.payload_hash,
            "timestamp_ms": self.timestamp_ms,
        })
        return sha256_hex(header.encode("utf-8"))

    @property
    def payload(self) -> dict:
        return json.loads(self.payload_json)


class Ledger:
    """In-process append-only block chain. Single writer."""

    def __init__(self):
        self.blocks: list[LedgerBlock] = []

    def append(self, payload: dict, timestamp_ms: float) -> LedgerBlock:
        payload_json = canonical_json(payload)
        prev = self.blocks[-1].header_hash() if self.blocks else GENESIS_PREV_HASH
        block = LedgerBlock(
            index=len(self.blocks),
            prev_hash=prev,
            payload_json=payload_json,
            payload_hash=sha256_hex(payload_json.encode("utf-8")),
            timestamp_ms=float(timestamp_ms),
        )
        self.blocks.append(block)
        return block

    def verify(self):
        return verify_chain(self.blocks)


@dataclass(frozen=True)
class ChainViolation:
    index: int
    reason: str  # PayloadHashMismatch | PrevHashMismatch | IndexMismatch


def verify_chain(blocks: list[LedgerBlock]) -> ChainViolation | None:
    """Recompute every hash and link; return the first violation, or None."""
    prev = GENESIS_PREV_HASH
    for pos, block in enumerate(blocks):
        if sha256_hex(block.payload_json.encode("utf-8")) != block.payload_hash:
            return ChainViolation(pos, "PayloadHashMismatch")
        if block.prev_hash != prev:
            return ChainViolation(pos, "PrevHashMismatch")
        if block.index != pos:
            return ChainViolation(pos, "IndexMismatch")
        prev = block.header_hash()
    return None


def export_ledger(blocks: list[LedgerBlock], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in blocks:
            fh.write(json.dumps({
                "index": b.index,
                "prev_hash": b.prev_hash,
                "payload": b.payload_json,
                "payload_hash": b.payload_hash,
                "timestamp_ms": b.timestamp_ms,
            }, ensure_ascii=False) + "\n")


def load_ledger(path) -> list[LedgerBlock]:
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                blocks.append(LedgerBlock(
                    index=int(obj["index"]),
                    prev_hash=str(obj["prev_hash"]),
                    payload_json=str(obj["payload"]),
                    payload_hash=str(obj["payload_hash"]),
                    timestamp_ms=float(obj["timestamp_ms"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise LedgerFormatError(f"bad ledger block: {exc}", lineno) from exc
    return blocks


# --------------------------------------------------------------------------
# Planner contract: registry + strictly sequential task execution
# --------------------------------------------------------------------------

PENDING, ASSIGNED, RUNNING, COMPLETED, TIMED_OUT = (
    "pending", "assigned", "running", "completed", "timed_out")


class PlannerContract:
    """Walks a stored plan one task at a time over the shared robot registry.

    At most one task per intent is ever assigned or running, and the cursor
    advances only on successful completion. A task timeout frees the robot
    but stalls the intent until an operator resolves it.
    """

    def __init__(self, ledger: Ledger, registry: RobotRegistry):
        self.ledger = ledger
        self.registry = registry
        self._intents: dict[str, dict] = {}

    def init_intent(self, request_id: str, plan: Plan) -> None:
        if not plan:
            raise PlanEmpty(f"request {request_id}: refusing a zero-step plan")
        if request_id in self._intents:
            raise InvalidTransition(f"request {request_id} already initialized")
        self._intents[request_id] = {
            "plan": plan,
            "cursor": 0,
            "states": [PENDING] * len(plan),
            "stalled": False,
        }

    def _state(self, request_id: str) -> dict:
        try:
            return self._intents[request_id]
        except KeyError:
            raise UnknownRequest(f"no plan stored for request {request_id!r}") from None

    def is_done(self, request_id: str) -> bool:
        st = self._state(request_id)
        return st["cursor"] >= len(st["plan"])

    def is_stalled(self, request_id: str) -> bool:
        return self._state(request_id)["stalled"]

    def assign_next(self, request_id: str,
                    timestamp_ms: float) -> tuple[str, LedgerBlock | None]:
        """Returns ("assigned", block), ("done", None), or ("busy", None)."""
        st = self._state(request_id)
        if st["stalled"]:
            raise InvalidTransition(f"request {request_id} is stalled")
        if any(s in (ASSIGNED, RUNNING) for s in st["states"]):
            raise InvalidTransition(
                f"request {request_id} already has a task in flight")
        if st["cursor"] >= len(st["plan"]):
            return "done", None
        step = st["plan"][st["cursor"]]
        if not self.registry.is_free(step.robot):
            return "busy", None
        self.registry.acquire(step.robot)
        st["states"][st["cursor"]] = ASSIGNED
        block = self.ledger.append({
            "kind": "assign_task",
            "request_id": request_id,
            "robot": step.robot,
            "skill": step.skill,
            "seq": st["cursor"],
        }, timestamp_ms)
        return "assigned", block

    def complete_task(self, request_id: str, seq_index: int, status: str,
                      timestamp_ms: float) -> LedgerBlock:
        st = self._state(request_id)
        if seq_index != st["cursor"] or st["states"][seq_index] not in (ASSIGNED, RUNNING):
            raise OutOfOrderCompletion(
                f"request {request_id}: completion for task {seq_index} "
                f"but cursor is {st['cursor']}")
        if status not in ("success", "timeout"):
            raise InvalidTransition(f"unknown completion status {status!r}")
        step = st["plan"][seq_index]
        self.registry.release(step.robot)
        if status == "success":
            st["states"][seq_index] = COMPLETED
            st["cursor"] += 1
        else:
            st["states"][seq_index] = TIMED_OUT
            st["stalled"] = True
        return self.ledger.append({
            "kind": "task_complete",
            "request_id": request_id,
            "robot": step.robot,
            "seq": seq_index,
            "status": status,
        }, timestamp_ms)

    def snapshot(self) -> dict:
        return {
            "intents": {
                rid: {
                    "plan": st["plan"].tokens(),
                    "cursor": st["cursor"],
                    "states": list(st["states"]),
                    "stalled": st["stalled"],
                }
                for rid, st in self._intents.items()
            },
            "availability": self.registry.availability(),
        }


# --------------------------------------------------------------------------
# Oracle contract: request/response/plan recording
# --------------------------------------------------------------------------

class OracleContract:
    """Records request hashes, response summaries, and the selected plan."""

    def __init__(self, ledger: Ledger, planner: PlannerContract,
                 organizations=ORGANIZATIONS):
        self.ledger = ledger
        self.planner = planner
        self.organizations = tuple(organizations)
        self._requests: dict[str, dict] = {}
        self._counter = 0

    def record_request(self, intent: str, org: str,
                       timestamp_ms: float) -> tuple[str, LedgerBlock]:
        if not intent.strip():
            raise EmptyIntent("intent must be non-empty")
        if org not in self.organizations:
            raise UnknownOrganization(
                f"organization {org!r} is not one of {self.organizations}")
        self._counter += 1
        request_id = f"req-{self._counter:05d}"
        request_hash = sha256_hex(intent.encode("utf-8"))
        block = self.ledger.append({
            "kind": "record_request",
            "request_id": request_id,
            "org": org,
            "request_hash": request_hash,
        }, timestamp_ms)
        self._requests[request_id] = {
            "request_hash": request_hash,
            "plan_stored": False,
        }
        return request_id, block

    def _require(self, request_id: str) -> dict:
        try:
            return self._requests[request_id]
        except KeyError:
            raise UnknownRequest(f"unknown request {request_id!r}") from None

    def record_responses(self, request_id: str, summary: list[dict],
                         timestamp_ms: float) -> LedgerBlock:
        self._require(request_id)
        return self.ledger.append({
            "kind": "record_responses",
            "request_id": request_id,
            "responses": summary,
        }, timestamp_ms)

    def store_plan(self, request_id: str, record,
                   timestamp_ms: float) -> LedgerBlock:
        """Record the selected plan and hand it to the planner contract."""
        req = self._require(request_id)
        if req["plan_stored"]:
            raise DuplicatePlan(f"request {request_id} already has a stored plan")
        plan = record.selected_plan()
        if not plan:
            raise PlanEmpty(f"request {request_id}: selected plan is empty")
        block = self.ledger.append({
            "kind": "store_plan",
            "request_id": request_id,
            "record_digest": record.digest(),
            "selected_oracle": record.selected_oracle,
            "plan": plan.tokens(),
        }, timestamp_ms)
        req["plan_stored"] = True
        self.planner.init_intent(request_id, plan)
        return block

    def snapshot(self) -> dict:
        return {"requests": {rid: dict(st) for rid, st in self._requests.items()}}


# --------------------------------------------------------------------------
# Audit replay
# --------------------------------------------------------------------------

def replay(blocks: list[LedgerBlock], registry: RobotRegistry) -> dict:
    """Re-run a ledger's transactions through fresh state machines.

    Returns the combined final-state snapshot. Raises if the recorded
    transaction sequence is not reachable through the public operations.
    """
    ledger = Ledger()
    planner = PlannerContract(ledger, registry)
    oracle_state: dict[str, dict] = {}
    for block in blocks:
        tx = block.payload
        kind = tx["kind"]
        if kind == "record_request":
            oracle_state[tx["request_id"]] = {
                "request_hash": tx["request_hash"], "plan_stored": False}
        elif kind == "record_responses":
            if tx["request_id"] not in oracle_state:
                raise UnknownRequest(tx["request_id"])
        elif kind == "store_plan":
            req = oracle_state.get(tx["request_id"])
            if req is None:
                raise UnknownRequest(tx["request_id"])
            if req["plan_stored"]:
                raise DuplicatePlan(tx["request_id"])
            req["plan_stored"] = True
            plan = parse_plan(f" {ARROW} ".join(tx["plan"]), registry)
            planner.init_intent(tx["request_id"], plan)
        elif kind == "assign_task":
            status, emitted = planner.assign_next(tx["request_id"], block.timestamp_ms)
            if status != "assigned":
                raise InvalidTransition(f"replay: assign_task not assignable ({status})")
            if emitted.payload != tx:
                raise InvalidTransition("replay: assignment diverged from the record")
        elif kind == "task_complete":
            planner.complete_task(tx["request_id"], tx["seq"], tx["status"],
                                  block.timestamp_ms)
        else:
            raise InvalidTransition(f"unknown transaction kind {kind!r}")
    snap = planner.snapshot()
    snap["requests"] = oracle_state
    return snap
