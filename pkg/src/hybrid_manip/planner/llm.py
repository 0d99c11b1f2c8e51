"""LLM-backed planning over an OpenAI-style chat-completions wire format.

Request body (UTF-8 JSON)::

    {"model": str, "messages": [{"role": "user", "content": str}, ...],
     "temperature": 0, "max_tokens": int}

The response must look like ``{"choices": [{"message": {"content": str}}]}``
where ``content`` is the JSON subtask array described in ``prompt.SYSTEM_RULES``.
The API key is read from an environment variable and sent as a bearer token.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from hybrid_manip.env.sim import WorldSummary
from hybrid_manip.errors import InvalidPlan, SchemaError, TransportError
from hybrid_manip.planner.plan import (
    LLM,
    FailureInfo,
    TaskPlan,
    instruction_hash,
    replan,
    subtasks_from_json,
    validate_plan,
)
from hybrid_manip.planner.prompt import render_prompt

DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_RETRIES = 2
DEFAULT_API_KEY_ENV = "HYBRID_MANIP_LLM_API_KEY"


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    model: str
    max_tokens: int
    temperature: float = 0.0


@dataclass
class LlmResponse:
    raw_text: str = ""
    plan: TaskPlan | None = None
    error: str | None = None
    latency_ms: float = 0.0
    retries_used: int = 0


@dataclass
class LlmExchange:
    request: LlmRequest
    response: LlmResponse = field(default_factory=LlmResponse)


class ChatClient(Protocol):
    model: str
    max_tokens: int
    max_retries: int

    def complete(self, messages: list[dict]) -> str: ...


@dataclass
class LlmClient:
    """Blocking chat-completions client. One instance per execution context."""

    url: str
    model: str = "gpt-4o-mini"
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = DEFAULT_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES
    max_tokens: int = 1024
    transport: httpx.BaseTransport | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self._http = httpx.Client(timeout=self.timeout, transport=self.transport)

    def close(self) -> None:
        self._http.close()

    def headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            h["Authorization"] = f"Bearer {key}"
        return h

    def body(self, messages: list[dict]) -> dict:
        return {"model": self.model, "messages": messages, "temperature": 0, "max_tokens": self.max_tokens}

    def complete(self, messages: list[dict]) -> str:
        try:
            resp = self._http.post(self.url, json=self.body(messages), headers=self.headers())
        except httpx.TimeoutException as exc:
            raise TransportError(f"LLM request timed out after {self.timeout} s: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"LLM request to {self.url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise SchemaError(f"response does not follow the chat-completions shape: {exc!r}") from None
        if not isinstance(content, str):
            raise SchemaError("choices[0].message.content is not a string")
        return content


def correction_message(error: str) -> str:
    return f"Your previous reply was rejected: {error}\nReply again with only the corrected JSON array."


def plan_llm(
    instr: str, world: WorldSummary, client: ChatClient, failure_context: str | None = None
) -> tuple[TaskPlan, LlmExchange]:
    """Ask the model for a plan; re-prompt with the validation error on schema violations.

    Makes at most ``1 + client.max_retries`` requests. Reference errors against
    the world (UnresolvableRef, AmbiguousRef) are raised straight away.
    """
    prompt = render_prompt(instr, world, failure_context)
    exchange = LlmExchange(LlmRequest(prompt, client.model, client.max_tokens))
    messages = [{"role": "user", "content": prompt}]
    start = time.perf_counter()
    attempt = 0
    try:
        while True:
            raw = client.complete(messages)
            exchange.response.raw_text = raw
            try:
                subtasks = subtasks_from_json(raw)
                plan = TaskPlan(tuple(subtasks), LLM, instruction_hash(instr))
                validate_plan(plan, world)
            except (SchemaError, InvalidPlan) as exc:
                exchange.response.error = str(exc)
                if attempt >= client.max_retries:
                    err = SchemaError(f"no valid plan after {attempt} retries: {exc}")
                    err.exchange = exchange
                    raise err from None
                attempt += 1
                exchange.response.retries_used = attempt
                messages = messages + [
                    {"role": "assistant", "content": raw},
                    {"role": "user", "content": correction_message(str(exc))},
                ]
                continue
            exchange.response.plan = plan
            exchange.response.error = None
            return plan, exchange
    finally:
        exchange.response.latency_ms = 1000.0 * (time.perf_counter() - start)


@dataclass
class LlmPlanner:
    client: ChatClient
    source: str = LLM
    exchanges: list[LlmExchange] = field(default_factory=list)

    def plan(self, instr: str, world: WorldSummary, failure_context: str | None = None) -> TaskPlan:
        plan, exchange = plan_llm(instr, world, self.client, failure_context)
        self.exchanges.append(exchange)
        return plan

    def replan(self, instr: str, prev: TaskPlan, world: WorldSummary, failure: FailureInfo) -> TaskPlan:
        return replan(instr, prev, world, failure, self)

    @property
    def latency_ms(self) -> float:
        return sum(e.response.latency_ms for e in self.exchanges)
