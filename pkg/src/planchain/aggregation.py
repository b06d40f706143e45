"""Round aggregation: similarity matrix, consensus scores, reputation, selection.

Per round, each oracle's consensus score is the row sum of its pairwise
similarities (self included), its selection value is consensus times its
reputation going into the round, and the highest selection value wins.
Reputation is the running mean of an oracle's past consensus scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canon import canonical_bytes, canonical_json, sha256_hex
from .plans import Plan

INITIAL_REPUTATION = 1.0


class AggregationError(Exception):
    pass


class MatrixError(AggregationError):
    pass


class MissingOracleResponse(AggregationError):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: tuple[tuple[float, ...], ...]

    @property
    def n(self) -> int:
        return len(self.entries)

    def row_sums(self) -> list[float]:
        return [sum(row) for row in self.entries]


def build_matrix(plans: list[Plan], metric) -> SimilarityMatrix:
    """Pairwise similarity matrix; each unordered pair computed once."""
    n = len(plans)
    if n < 2:
        raise MatrixError(f"need at least 2 plans, got {n}")
    rows = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            try:
                value = float(metric(plans[i], plans[j], plans))
            except Exception as exc:
                raise MatrixError(f"metric failed on pair ({i},{j}): {exc}") from exc
            rows[i][j] = value
            rows[j][i] = value
    return SimilarityMatrix(tuple(tuple(row) for row in rows))


def consensus_scores(matrix: SimilarityMatrix) -> list[float]:
    """Row sums of the similarity matrix, self-similarity included."""
    return matrix.row_sums()


@dataclass(frozen=True)
class Reputation:
    """Running mean of past consensus scores; 1.0 before any history."""

    history: tuple[float, ...] = ()

    @property
    def value(self) -> float:
        if not self.history:
            return INITIAL_REPUTATION
        return sum(self.history) / len(self.history)


def update_reputation(rep: Reputation, new_consensus: float) -> Reputation:
    return Reputation(rep.history + (float(new_consensus),))


def select_plan(consensus: list[float], reputations: list[float],
                plans: list[Plan]) -> tuple[int, Plan]:
    """argmax of consensus * reputation; ties broken by lowest index."""
    if not (len(consensus) == len(reputations) == len(plans)) or not plans:
        raise AggregationError("consensus, reputations, plans must have equal length >= 1")
    values = [c * r for c, r in zip(consensus, reputations)]
    winner = max(range(len(values)), key=lambda i: (values[i], -i))
    return winner, plans[winner]


class ReputationTable:
    """Per-oracle reputation state. Single writer, snapshot-friendly."""

    def __init__(self, oracle_ids):
        self._reps: dict[int, Reputation] = {
            oid: Reputation() for oid in sorted(oracle_ids)}
        if not self._reps:
            raise AggregationError("reputation table needs at least one oracle")
        self.rounds_completed = 0

    @property
    def oracle_ids(self) -> list[int]:
        return list(self._reps)

    def get(self, oracle_id: int) -> Reputation:
        return self._reps[oracle_id]

    def apply(self, oracle_id: int, consensus: float) -> None:
        self._reps[oracle_id] = update_reputation(self._reps[oracle_id], consensus)

    def values(self) -> dict[int, float]:
        return {oid: rep.value for oid, rep in self._reps.items()}


@dataclass
class RoundRecord:
    """Everything that happened in one aggregation round."""

    round_index: int
    intent: str
    oracle_ids: list[int]
    plans: list[Plan]
    matrix: SimilarityMatrix
    consensus: list[float]
    reputation_before: list[float]
    selection_values: list[float]
    selected_oracle: int
    reputation_after: list[float]
    metric_name: str = "lcs"

    def selected_plan(self) -> Plan:
        return self.plans[self.oracle_ids.index(self.selected_oracle)]

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "intent": self.intent,
            "metric": self.metric_name,
            "oracles": [
                {
                    "id": oid,
                    "plan": plan.tokens(),
                    "consensus": c,
                    "reputation_before": rb,
                    "selection_value": v,
                    "reputation_after": ra,
                }
                for oid, plan, c, rb, v, ra in zip(
                    self.oracle_ids, self.plans, self.consensus,
                    self.reputation_before, self.selection_values,
                    self.reputation_after)
            ],
            "matrix": [list(row) for row in self.matrix.entries],
            "selected_oracle": self.selected_oracle,
        }

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, floats at 12 significant digits."""
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return sha256_hex(canonical_bytes(self.to_dict()))


def run_round(intent: str, responses: list[tuple[int, Plan]], metric,
              table: ReputationTable, round_index: int | None = None) -> RoundRecord:
    """One full round: matrix -> consensus -> selection -> reputation update.

    Selection uses reputations as they stood before the round; afterwards
    every oracle's reputation absorbs its consensus score from this round.
    """
    expected = set(table.oracle_ids)
    got = {oid for oid, _ in responses}
    if got != expected:
        raise MissingOracleResponse(
            f"responses for oracles {sorted(got)} but table has {sorted(expected)}")
    if len(responses) != len(expected):
        raise MissingOracleResponse("duplicate oracle id in responses")

    ordered = sorted(responses, key=lambda r: r[0])
    oracle_ids = [oid for oid, _ in ordered]
    plans = [plan for _, plan in ordered]

    matrix = build_matrix(plans, metric)
    consensus = consensus_scores(matrix)
    reps_before = [table.get(oid).value for oid in oracle_ids]
    selection_values = [c * r for c, r in zip(consensus, reps_before)]
    winner_pos, _ = select_plan(consensus, reps_before, plans)

    for oid, c in zip(oracle_ids, consensus):
        table.apply(oid, c)
    table.rounds_completed += 1
    reps_after = [table.get(oid).value for oid in oracle_ids]

    if round_index is None:
        round_index = table.rounds_completed
    return RoundRecord(
        round_index=round_index,
        intent=intent,
        oracle_ids=oracle_ids,
        plans=plans,
        matrix=matrix,
        consensus=consensus,
        reputation_before=reps_before,
        selection_values=selection_values,
        selected_oracle=oracle_ids[winner_pos],
        reputation_after=reps_after,
        metric_name=getattr(metric, "name", "custom"),
    )
