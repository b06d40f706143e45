import json

import pytest

from planchain.benchmark import generate_benchmark, write_benchmark
from planchain.plans import SubTask, scenario_registry


@pytest.fixture
def registry():
    return scenario_registry()


@pytest.fixture(scope="session")
def scenario_steps():
    return scenario_registry().all_steps()


@pytest.fixture(scope="session")
def bench30(tmp_path_factory):
    """The standard 30-case generated benchmark, written to disk."""
    cases = generate_benchmark(30, 7)
    path = tmp_path_factory.mktemp("bench") / "bench30.jsonl"
    write_benchmark(cases, path)
    return cases, path


def benign_oracle(oid, label=None, latency=None):
    return {"id": oid, "label": label or f"benign-{oid}",
            "behavior": {"kind": "benign"},
            "latency": latency or {"kind": "fixed", "ms": 2000}}


def adversarial_oracle(oid, attack, label=None, latency=None):
    return {"id": oid, "label": label or f"adversary-{oid}",
            "behavior": {"kind": "adversarial", "attack": attack},
            "latency": latency or {"kind": "fixed", "ms": 2200}}


def network_dict(oracles, timeout_ms=5000, seed=7, **extra):
    return {"oracles": oracles, "timeout_ms": timeout_ms, "seed": seed, **extra}


def write_network(path, net):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net, fh)
    return path


ST = SubTask
