"""Robots, skills, plans, and the plan-notation parser.

A plan is an ordered sequence of ``Robot:Skill`` sub-tasks. Order matters:
two plans with the same steps in a different order are different plans.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

ARROW = "->"


class PlanError(Exception):
    """Base class for plan parsing and validation failures."""


class MalformedToken(PlanError):
    pass


class UnknownRobot(PlanError):
    pass


class UnknownSkill(PlanError):
    pass


class SkillRobotMismatch(PlanError):
    pass


class RegistryError(PlanError):
    pass


def _check_name(name: str, what: str) -> None:
    if not name:
        raise MalformedToken(f"{what} name is empty")
    if ":" in name or any(c.isspace() for c in name):
        raise MalformedToken(
            f"{what} name {name!r} contains a reserved separator character")


@dataclass(frozen=True)
class SubTask:
    """One atomic ``robot:skill`` step of a plan."""

    robot: str
    skill: str

    def __post_init__(self):
        _check_name(self.robot, "robot")
        _check_name(self.skill, "skill")

    def token(self) -> str:
        return f"{self.robot}:{self.skill}"


@dataclass(frozen=True)
class Plan:
    """Ordered, possibly empty sequence of sub-tasks. Duplicates allowed."""

    steps: tuple[SubTask, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[SubTask]:
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def __bool__(self) -> bool:
        return bool(self.steps)

    def tokens(self) -> list[str]:
        return [s.token() for s in self.steps]

    def reversed(self) -> "Plan":
        return Plan(tuple(reversed(self.steps)))


class RobotRegistry:
    """Maps robots to their (pairwise disjoint) skill sets and tracks availability.

    Disjointness means every skill belongs to exactly one robot, so a skill
    name alone identifies the robot that must execute it.
    """

    def __init__(self, robots: Mapping[str, Iterable[str]]):
        self.robots: dict[str, frozenset[str]] = {}
        self._owner: dict[str, str] = {}
        for robot, skills in robots.items():
            _check_name(robot, "robot")
            skillset = []
            for skill in skills:
                _check_name(skill, "skill")
                if skill in self._owner:
                    raise RegistryError(
                        f"skill {skill!r} assigned to both "
                        f"{self._owner[skill]!r} and {robot!r}; "
                        "skill sets must be pairwise disjoint")
                self._owner[skill] = robot
                skillset.append(skill)
            self.robots[robot] = frozenset(skillset)
        self._free: dict[str, bool] = {r: True for r in self.robots}

    def owner_of(self, skill: str) -> str | None:
        return self._owner.get(skill)

    def validate_step(self, step: SubTask) -> None:
        if step.robot not in self.robots:
            raise UnknownRobot(f"unknown robot {step.robot!r}")
        owner = self._owner.get(step.skill)
        if owner is None:
            raise UnknownSkill(f"unknown skill {step.skill!r}")
        if owner != step.robot:
            raise SkillRobotMismatch(
                f"skill {step.skill!r} belongs to {owner!r}, not {step.robot!r}")

    def validate_plan(self, plan: Plan) -> None:
        for step in plan:
            self.validate_step(step)

    def all_steps(self) -> list[SubTask]:
        """Every valid (robot, skill) pair, in registry order."""
        return [SubTask(r, s) for r in self.robots for s in sorted(self.robots[r])]

    # -- availability (mutated only by the planner state machine) --

    def is_free(self, robot: str) -> bool:
        return self._free[robot]

    def acquire(self, robot: str) -> None:
        if not self._free[robot]:
            raise RegistryError(f"robot {robot!r} is already busy")
        self._free[robot] = False

    def release(self, robot: str) -> None:
        self._free[robot] = True

    def availability(self) -> dict[str, str]:
        return {r: ("free" if f else "busy") for r, f in self._free.items()}


#: Robot fleet of the factory scenario: three robots, nine disjoint skills.
SCENARIO_SKILLS: dict[str, tuple[str, ...]] = {
    "Atlas": ("Navigate", "Grasp", "Deposit"),
    "Vulcan": ("Join", "Cut", "Paint"),
    "Iris": ("ScanQR", "Measure", "Photograph"),
}


def scenario_registry() -> RobotRegistry:
    """The fixed 3-robot, 9-skill fleet used by the benchmark scenario."""
    return RobotRegistry(SCENARIO_SKILLS)


def parse_plan(text: str, registry: RobotRegistry) -> Plan:
    """Parse ``Robot:Skill -> Robot:Skill -> ...`` notation into a Plan.

    Surrounding whitespace is ignored; the empty string parses to the empty
    plan. Every step is validated against the registry.
    """
    if not text.strip():
        return Plan()
    steps = []
    for raw in text.split(ARROW):
        token = raw.strip()
        if token.count(":") != 1:
            raise MalformedToken(
                f"token {token!r} must contain exactly one ':'")
        robot, skill = token.split(":")
        robot, skill = robot.strip(), skill.strip()
        step = SubTask(robot, skill)
        registry.validate_step(step)
        steps.append(step)
    return Plan(tuple(steps))


def format_plan(plan: Plan) -> str:
    """Inverse of parse_plan: ``parse_plan(format_plan(p), r) == p``."""
    return f" {ARROW} ".join(plan.tokens())
