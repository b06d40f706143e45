"""Optional live mode: query real LLM services and parse plans from replies.

Speaks the OpenAI-compatible chat-completions wire format. API keys come
from ORACLE_API_KEY_<ID> environment variables and are never serialized.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field

from .plans import ARROW, Plan, RobotRegistry, parse_plan

_TOKEN_RE = re.compile(r"^[^:\s]+:[^:\s]+$")


class LlmClientError(Exception):
    pass


class EmptyIntentError(LlmClientError):
    pass


class HttpError(LlmClientError):
    def __init__(self, status: int, model: str):
        super().__init__(f"HTTP {status} from model {model}")
        self.status = status


class AuthError(LlmClientError):
    pass


class TimeoutError_(LlmClientError):
    pass


class NoPlanFound(LlmClientError):
    pass


class TemplateError(LlmClientError):
    pass


@dataclass
class LiveOracleConfig:
    oracle_id: int
    endpoint: str
    model: str
    api_key: str = field(default="", repr=False)
    timeout_ms: float = 30_000.0
    temperature: float = 0.0
    system_prompt_override: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise LlmClientError("temperature must be >= 0")
        if self.timeout_ms <= 0:
            raise LlmClientError("timeout_ms must be > 0")

    def to_public_dict(self) -> dict:
        """Serializable view; deliberately omits the API key."""
        return {
            "oracle_id": self.oracle_id,
            "endpoint": self.endpoint,
            "model": self.model,
            "timeout_ms": self.timeout_ms,
            "temperature": self.temperature,
            "system_prompt_override": self.system_prompt_override,
        }

    @classmethod
    def from_dict(cls, oracle_id: int, d: dict) -> "LiveOracleConfig":
        return cls(
            oracle_id=oracle_id,
            endpoint=d["endpoint"],
            model=d["model"],
            api_key=os.environ.get(f"ORACLE_API_KEY_{oracle_id}", ""),
            timeout_ms=float(d.get("timeout_ms", 30_000.0)),
            temperature=float(d.get("temperature", 0.0)),
            system_prompt_override=d.get("system_prompt_override"),
        )


@dataclass
class PromptTemplate:
    role_preamble: str = (
        "Role: You are the Central Task Planner for a heterogeneous robot "
        "fleet. Decompose the user's request into an ordered sequence of "
        "atomic sub-tasks, one per line, each written exactly as Robot:Skill.")
    logic_rules: str = (
        "Logic Rules: Use only the robots and skills listed. Every skill "
        "belongs to exactly one robot. Tasks run strictly one after another. "
        "Output only the sub-task lines, nothing else.")
    few_shot: str = (
        "Few-Shot Examples:\n"
        "Request: go grab the box and put it away\n"
        "Atlas:Navigate\nAtlas:Grasp\nAtlas:Deposit")
    robot_roles: dict = field(default_factory=lambda: {
        "Atlas": "Logistics", "Vulcan": "Fabrication", "Iris": "Inspection"})

    def roster(self, registry: RobotRegistry) -> str:
        lines = ["The Robots and Skills:"]
        for i, (robot, skills) in enumerate(registry.robots.items(), 1):
            role = self.robot_roles.get(robot)
            name = f"{robot} ({role})" if role else robot
            ordered = [s for s in SKILL_ORDER.get(robot, ()) if s in skills]
            ordered += sorted(skills - set(ordered))
            lines.append(f"{i}. {name}: {', '.join(ordered)}")
        return "\n".join(lines)


# Presentation order for the scenario fleet's roster lines.
SKILL_ORDER = {
    "Atlas": ("Navigate", "Grasp", "Deposit"),
    "Vulcan": ("Join", "Cut", "Paint"),
    "Iris": ("ScanQR", "Measure", "Photograph"),
}


def render_prompt(template: PromptTemplate, registry: RobotRegistry,
                  intent: str) -> str:
    """Deterministic prompt; the intent follows the Current Task marker."""
    if not intent.strip():
        raise EmptyIntentError("intent must be non-empty")
    roster = template.roster(registry)
    for robot, skills in registry.robots.items():
        if roster.count(robot) != 1:
            raise TemplateError(f"roster must list robot {robot!r} exactly once")
        for skill in skills:
            if roster.count(skill) != 1:
                raise TemplateError(f"roster must list skill {skill!r} exactly once")
    return "\n".join([template.role_preamble, roster, template.logic_rules,
                      template.few_shot, "Current Task:", intent])


def query_oracle(config: LiveOracleConfig, prompt: str, *,
                 post=None) -> tuple[str, float]:
    """POST a chat completion; returns (completion text, wall latency ms).

    The adversarial-injection slot is purely the system_prompt_override
    field; the returned completion is never transformed.
    """
    if post is None:
        import requests
        post = requests.post
    messages = []
    if config.system_prompt_override:
        messages.append({"role": "system", "content": config.system_prompt_override})
    messages.append({"role": "user", "content": prompt})
    body = {
        "model": config.model,
        "temperature": config.temperature,
        "messages": messages,
    }
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    start = time.monotonic()
    try:
        resp = post(config.endpoint, json=body, headers=headers,
                    timeout=config.timeout_ms / 1000.0)
    except Exception as exc:
        if type(exc).__name__ in ("Timeout", "ConnectTimeout", "ReadTimeout"):
            raise TimeoutError_(f"model {config.model}: {exc}") from exc
        raise LlmClientError(f"model {config.model}: {exc}") from exc
    latency_ms = (time.monotonic() - start) * 1000.0
    status = resp.status_code
    if status in (401, 403):
        raise AuthError(f"HTTP {status} from model {config.model}")
    if status >= 400:
        raise HttpError(status, config.model)
    data = resp.json()
    try:
        text = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LlmClientError(
            f"model {config.model}: malformed completion body") from exc
    return text, latency_ms


def parse_completion(text: str, registry: RobotRegistry,
                     strict: bool = False) -> Plan:
    """Extract the first contiguous block of Robot:Skill tokens.

    Tokens may be arrow- or newline-separated. Strict mode rejects any
    surrounding prose; lenient mode skips it.
    """
    def line_tokens(line: str) -> list[str] | None:
        pieces = [p.strip() for p in line.split(ARROW)]
        if all(p and _TOKEN_RE.match(p) for p in pieces):
            return pieces
        return None

    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if strict:
        tokens: list[str] = []
        for line in lines:
            pieces = line_tokens(line)
            if pieces is None:
                raise NoPlanFound(f"unexpected prose in strict mode: {line!r}")
            tokens.extend(pieces)
        if not tokens:
            raise NoPlanFound("completion contains no plan")
        return parse_plan(f" {ARROW} ".join(tokens), registry)

    tokens = []
    for line in lines:
        pieces = line_tokens(line)
        if pieces is not None:
            tokens.extend(pieces)
        elif tokens:
            break
    if not tokens:
        raise NoPlanFound("completion contains no plan")
    return parse_plan(f" {ARROW} ".join(tokens), registry)


def gather_live_responses(configs: list[LiveOracleConfig], template: PromptTemplate,
                          registry: RobotRegistry, intent: str, *, post=None,
                          strict: bool = False):
    """Query every live oracle; failures become missing responses.

    Returns OracleResponse objects ordered by oracle id, mirroring the
    simulated network so the rest of the workflow is mode-agnostic.
    """
    from .oracles import AllOraclesTimedOut, OracleResponse

    prompt = render_prompt(template, registry, intent)
    out = []
    for config in sorted(configs, key=lambda c: c.oracle_id):
        start = time.monotonic()
        try:
            text, latency_ms = query_oracle(config, prompt, post=post)
            plan = parse_completion(text, registry, strict=strict)
            out.append(OracleResponse(config.oracle_id, plan, latency_ms))
        except Exception:  # any failure (HTTP, timeout, parse) becomes Missing
            latency_ms = (time.monotonic() - start) * 1000.0
            out.append(OracleResponse(config.oracle_id, None, latency_ms))
    if all(r.missing for r in out):
        raise AllOraclesTimedOut("no live oracle produced a parseable plan")
    return out
