"""Benchmark cases: JSONL loading plus a deterministic case generator.

File format: one JSON object per line, UTF-8, LF line endings::

    {"id": 1, "intent": "...", "ground_truth": ["Atlas:Navigate", "Iris:ScanQR"]}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .plans import ARROW, Plan, PlanError, RobotRegistry, parse_plan, scenario_registry


class BenchmarkError(Exception):
    pass


class FormatError(BenchmarkError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(BenchmarkError):
    def __init__(self, message: str, case_id):
        super().__init__(f"case {case_id}: {message}")
        self.case_id = case_id


@dataclass(frozen=True)
class BenchmarkCase:
    id: int
    intent: str
    ground_truth: Plan


def load_benchmark(path, registry: RobotRegistry | None = None) -> list[BenchmarkCase]:
    """Load cases in file order; ground truths are validated against the registry."""
    registry = registry or scenario_registry()
    cases: list[BenchmarkCase] = []
    seen_ids: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc}", lineno) from exc
            if not isinstance(obj, dict):
                raise FormatError("expected a JSON object", lineno)
            try:
                case_id = obj["id"]
                intent = obj["intent"]
                tokens = obj["ground_truth"]
            except KeyError as exc:
                raise FormatError(f"missing field {exc.args[0]!r}", lineno) from exc
            if not isinstance(case_id, int) or isinstance(case_id, bool):
                raise FormatError("'id' must be an integer", lineno)
            if not isinstance(intent, str):
                raise FormatError("'intent' must be a string", lineno)
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise FormatError("'ground_truth' must be a list of strings", lineno)
            if case_id in seen_ids:
                raise FormatError(f"duplicate case id {case_id}", lineno)
            seen_ids.add(case_id)
            try:
                plan = parse_plan(f" {ARROW} ".join(tokens), registry)
            except PlanError as exc:
                raise ValidationError(str(exc), case_id) from exc
            cases.append(BenchmarkCase(case_id, intent, plan))
    return cases


def write_benchmark(cases: list[BenchmarkCase], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for case in cases:
            fh.write(json.dumps(
                {"id": case.id, "intent": case.intent,
                 "ground_truth": case.ground_truth.tokens()},
                ensure_ascii=False) + "\n")


# Intent templates over the scenario fleet, longest plans first. Each ground
# truth avoids adjacent duplicate steps and never opens with Iris:Photograph,
# so every attack strategy in the oracle simulator actually perturbs it.
_TEMPLATES: list[tuple[str, list[str]]] = [
    ("Fetch the {obj} from storage, check its label, cut it to size, "
     "paint it, and put it back in the depot",
     ["Atlas:Navigate", "Atlas:Grasp", "Iris:ScanQR", "Vulcan:Cut",
      "Vulcan:Paint", "Atlas:Navigate", "Atlas:Deposit"]),
    ("Collect the {obj}, measure it, trim and weld it, document the result, "
     "and store it",
     ["Atlas:Navigate", "Atlas:Grasp", "Iris:Measure", "Vulcan:Cut",
      "Vulcan:Join", "Iris:Photograph", "Atlas:Deposit"]),
    ("Go to the {obj}, scan its code, paint it, photograph the finish, "
     "and drop it off",
     ["Atlas:Navigate", "Iris:ScanQR", "Atlas:Grasp", "Vulcan:Paint",
      "Iris:Photograph", "Atlas:Deposit"]),
    ("Bring the {obj} to the bench, weld the seam, verify its dimensions, "
     "apply a coat, and put it away",
     ["Atlas:Navigate", "Atlas:Grasp", "Vulcan:Join", "Iris:Measure",
      "Vulcan:Paint", "Atlas:Deposit"]),
    ("Pick up the {obj}, cut it down, measure the result, and return it",
     ["Atlas:Navigate", "Atlas:Grasp", "Vulcan:Cut", "Iris:Measure",
      "Atlas:Deposit"]),
    ("Scan the {obj} on arrival, then fetch it, paint it, and stow it",
     ["Iris:ScanQR", "Atlas:Navigate", "Atlas:Grasp", "Vulcan:Paint",
      "Atlas:Deposit"]),
    ("Inspect the {obj}: photograph it, take measurements, and file it away",
     ["Atlas:Navigate", "Iris:Photograph", "Iris:Measure", "Atlas:Deposit"]),
    ("Move the {obj} to the welding cell, join it, and store it",
     ["Atlas:Navigate", "Atlas:Grasp", "Vulcan:Join", "Atlas:Deposit"]),
    ("Drive to the {obj} and record its QR code and a photo",
     ["Atlas:Navigate", "Iris:ScanQR", "Iris:Photograph"]),
    ("Grab the {obj}, cut it, and put it down",
     ["Atlas:Grasp", "Vulcan:Cut", "Atlas:Deposit"]),
    ("Scan and measure the {obj} where it stands",
     ["Iris:ScanQR", "Iris:Measure"]),
    ("Go photograph the {obj}",
     ["Atlas:Navigate", "Iris:Photograph"]),
]

_OBJECTS = [
    "crate", "bracket", "steel panel", "pallet", "valve housing",
    "sensor mount", "gearbox", "aluminium frame", "pipe section",
    "control cabinet", "battery tray", "conveyor roller",
]


def generate_benchmark(count: int, seed: int,
                       registry: RobotRegistry | None = None) -> list[BenchmarkCase]:
    """Produce `count` cases by templating intents over the scenario skills.

    Fully determined by the seed; ground truths are valid by construction.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    registry = registry or scenario_registry()
    rng = random.Random(seed)
    cases = []
    for i in range(count):
        template_intent, tokens = _TEMPLATES[i % len(_TEMPLATES)]
        obj = rng.choice(_OBJECTS)
        intent = template_intent.format(obj=obj)
        plan = parse_plan(f" {ARROW} ".join(tokens), registry)
        cases.append(BenchmarkCase(i + 1, intent, plan))
    return cases
