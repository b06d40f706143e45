"""Simulated oracle network: behaviors, attacks, latencies, threat bound.

Each oracle is either benign (returns the ground-truth plan, optionally with
configurable random perturbations) or adversarial (applies a fixed attack to
the plan). Everything is deterministic given (network config, case, seed).
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

from .plans import Plan, RobotRegistry, SubTask, parse_plan, scenario_registry


class OracleError(Exception):
    pass


class ThreatModelViolation(OracleError):
    pass


class AllOraclesTimedOut(OracleError):
    pass


class ConfigError(OracleError):
    pass


# --------------------------------------------------------------------------
# Behaviors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationConfig:
    """Probabilities of benign-model inconsistency applied to ground truth."""

    swap_prob: float = 0.0
    drop_prob: float = 0.0
    insert_prob: float = 0.0
    substitute_prob: float = 0.0

    def __post_init__(self):
        for name in ("swap_prob", "drop_prob", "insert_prob", "substitute_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {p}")


@dataclass(frozen=True)
class AppendStep:
    kind = "append_step"
    step: SubTask


@dataclass(frozen=True)
class ReorderSwap:
    kind = "reorder_swap"
    count: int = 1


@dataclass(frozen=True)
class SubstituteStep:
    kind = "substitute_step"
    step: SubTask
    position: str = "first"  # first | last | random


@dataclass(frozen=True)
class TruncateTail:
    kind = "truncate_tail"
    count: int = 1


@dataclass(frozen=True)
class Benign:
    kind = "benign"
    noise: PerturbationConfig = field(default_factory=PerturbationConfig)


@dataclass(frozen=True)
class Adversarial:
    kind = "adversarial"
    attack: AppendStep | ReorderSwap | SubstituteStep | TruncateTail


def apply_attack(attack, plan: Plan, rng: random.Random) -> Plan:
    steps = list(plan.steps)
    if isinstance(attack, AppendStep):
        steps.append(attack.step)
    elif isinstance(attack, ReorderSwap):
        for _ in range(attack.count):
            candidates = [i for i in range(len(steps) - 1) if steps[i] != steps[i + 1]]
            if not candidates:
                break
            i = rng.choice(candidates)
            steps[i], steps[i + 1] = steps[i + 1], steps[i]
    elif isinstance(attack, SubstituteStep):
        if steps:
            if attack.position == "first":
                idx = 0
            elif attack.position == "last":
                idx = len(steps) - 1
            else:
                idx = rng.randrange(len(steps))
            steps[idx] = attack.step
    elif isinstance(attack, TruncateTail):
        steps = steps[:max(0, len(steps) - attack.count)]
    else:
        raise ConfigError(f"unknown attack {attack!r}")
    return Plan(tuple(steps))


def apply_noise(noise: PerturbationConfig, plan: Plan, rng: random.Random,
                registry: RobotRegistry) -> Plan:
    steps = list(plan.steps)
    if len(steps) >= 2 and rng.random() < noise.swap_prob:
        i = rng.randrange(len(steps) - 1)
        steps[i], steps[i + 1] = steps[i + 1], steps[i]
    if steps and rng.random() < noise.drop_prob:
        del steps[rng.randrange(len(steps))]
    if rng.random() < noise.insert_prob:
        steps.insert(rng.randrange(len(steps) + 1), rng.choice(registry.all_steps()))
    if steps and rng.random() < noise.substitute_prob:
        steps[rng.randrange(len(steps))] = rng.choice(registry.all_steps())
    return Plan(tuple(steps))


# --------------------------------------------------------------------------
# Latency models (simulated milliseconds)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedLatency:
    kind = "fixed"
    ms: float

    def __post_init__(self):
        if self.ms < 0:
            raise ConfigError("fixed latency must be >= 0")

    def sample(self, rng: random.Random) -> float:
        return float(self.ms)

    def mean(self) -> float:
        return float(self.ms)


@dataclass(frozen=True)
class LogNormalLatency:
    kind = "lognormal"
    mu: float
    sigma: float

    def sample(self, rng: random.Random) -> float:
        return rng.lognormvariate(self.mu, self.sigma)

    def mean(self) -> float:
        return math.exp(self.mu + self.sigma ** 2 / 2)


@dataclass(frozen=True)
class EmpiricalLatency:
    kind = "empirical"
    samples: tuple[float, ...]

    def __post_init__(self):
        if not self.samples or any(s < 0 for s in self.samples):
            raise ConfigError("empirical samples must be non-empty and >= 0")

    def sample(self, rng: random.Random) -> float:
        return float(rng.choice(self.samples))

    def mean(self) -> float:
        return sum(self.samples) / len(self.samples)


@dataclass(frozen=True)
class OracleProfile:
    id: int
    label: str
    behavior: Benign | Adversarial
    latency: FixedLatency | LogNormalLatency | EmpiricalLatency = FixedLatency(2000.0)

    @property
    def is_adversarial(self) -> bool:
        return isinstance(self.behavior, Adversarial)


@dataclass(frozen=True)
class NetworkConfig:
    oracles: tuple[OracleProfile, ...]
    timeout_ms: float = 5000.0
    seed: int = 0


@dataclass(frozen=True)
class OracleResponse:
    oracle_id: int
    plan: Plan | None  # None means the response missed the timeout
    latency_ms: float

    @property
    def missing(self) -> bool:
        return self.plan is None


# --------------------------------------------------------------------------
# Deterministic response generation
# --------------------------------------------------------------------------

def derive_rng(seed: int, case_id: int, oracle_id: int) -> random.Random:
    """Independent, platform-stable RNG stream per (seed, case, oracle)."""
    material = f"{seed}:{case_id}:{oracle_id}".encode("ascii")
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


def respond(profile: OracleProfile, case, seed: int,
            registry: RobotRegistry | None = None) -> tuple[Plan, float]:
    """One oracle's plan and sampled latency for a benchmark case."""
    registry = registry or scenario_registry()
    rng = derive_rng(seed, case.id, profile.id)
    if isinstance(profile.behavior, Benign):
        plan = apply_noise(profile.behavior.noise, case.ground_truth, rng, registry)
    else:
        plan = apply_attack(profile.behavior.attack, case.ground_truth, rng)
    latency = profile.latency.sample(rng)
    return plan, latency


def gather_responses(network: NetworkConfig, case, timeout_ms: float | None = None,
                     seed: int | None = None,
                     registry: RobotRegistry | None = None) -> list[OracleResponse]:
    """Responses from every oracle, ordered by oracle id.

    A response slower than the timeout is reported with plan=None; its
    sampled latency is still recorded for latency reporting.
    """
    if not network.oracles:
        raise ConfigError("network has no oracles")
    timeout_ms = network.timeout_ms if timeout_ms is None else timeout_ms
    seed = network.seed if seed is None else seed
    out = []
    for profile in sorted(network.oracles, key=lambda p: p.id):
        plan, latency = respond(profile, case, seed, registry)
        if latency > timeout_ms:
            out.append(OracleResponse(profile.id, None, latency))
        else:
            out.append(OracleResponse(profile.id, plan, latency))
    if all(r.missing for r in out):
        raise AllOraclesTimedOut(
            f"all {len(out)} oracles exceeded the {timeout_ms} ms timeout")
    return out


# --------------------------------------------------------------------------
# Configuration loading
# --------------------------------------------------------------------------

def check_threat_bound(oracles, allow_unsafe: bool = False) -> None:
    total = len(oracles)
    adversaries = sum(1 for p in oracles if p.is_adversarial)
    if adversaries * 3 >= total and adversaries > 0 and not allow_unsafe:
        raise ThreatModelViolation(
            f"{adversaries} adversarial oracles out of {total} violates the "
            f"Byzantine bound f < L/3; set allow_unsafe to override for experiments")


def _parse_step(token: str, registry: RobotRegistry) -> SubTask:
    plan = parse_plan(token, registry)
    if len(plan) != 1:
        raise ConfigError(f"expected a single Robot:Skill token, got {token!r}")
    return plan[0]


def _behavior_from_dict(d: dict, registry: RobotRegistry):
    kind = d.get("kind", "benign")
    if kind == "benign":
        return Benign(PerturbationConfig(**d.get("noise", {})))
    if kind == "adversarial":
        attack = d.get("attack", {})
        akind = attack.get("kind")
        if akind == "append_step":
            return Adversarial(AppendStep(_parse_step(attack["step"], registry)))
        if akind == "reorder_swap":
            return Adversarial(ReorderSwap(int(attack.get("count", 1))))
        if akind == "substitute_step":
            return Adversarial(SubstituteStep(
                _parse_step(attack["step"], registry),
                attack.get("position", "first")))
        if akind == "truncate_tail":
            return Adversarial(TruncateTail(int(attack.get("count", 1))))
        raise ConfigError(f"unknown attack kind {akind!r}")
    raise ConfigError(f"unknown behavior kind {kind!r}")


def _latency_from_dict(d: dict):
    kind = d.get("kind", "fixed")
    if kind == "fixed":
        return FixedLatency(float(d.get("ms", 2000.0)))
    if kind == "lognormal":
        return LogNormalLatency(float(d["mu"]), float(d["sigma"]))
    if kind == "empirical":
        return EmpiricalLatency(tuple(float(x) for x in d["samples"]))
    raise ConfigError(f"unknown latency kind {kind!r}")


def network_from_dict(d: dict, registry: RobotRegistry | None = None) -> NetworkConfig:
    registry = registry or scenario_registry()
    raw_oracles = d.get("oracles")
    if not raw_oracles:
        raise ConfigError("network config needs a non-empty 'oracles' list")
    profiles = []
    for entry in raw_oracles:
        try:
            profiles.append(OracleProfile(
                id=int(entry["id"]),
                label=str(entry.get("label", f"oracle-{entry['id']}")),
                behavior=_behavior_from_dict(entry.get("behavior", {}), registry),
                latency=_latency_from_dict(entry.get("latency", {})),
            ))
        except KeyError as exc:
            raise ConfigError(f"oracle entry missing field {exc.args[0]!r}") from exc
    ids = [p.id for p in profiles]
    if sorted(ids) != list(range(len(ids))):
        raise ConfigError(f"oracle ids must be 0..L-1 and unique, got {sorted(ids)}")
    check_threat_bound(profiles, allow_unsafe=bool(d.get("allow_unsafe", False)))
    return NetworkConfig(
        oracles=tuple(sorted(profiles, key=lambda p: p.id)),
        timeout_ms=float(d.get("timeout_ms", 5000.0)),
        seed=int(d.get("seed", 0)),
    )


def load_network_config(path, registry: RobotRegistry | None = None) -> NetworkConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid network config JSON: {exc}") from exc
    return network_from_dict(d, registry)
