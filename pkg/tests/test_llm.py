from __future__ import annotations

import json
import socket

import httpx
import pytest

from hybrid_manip.env import Env, load_scenario
from hybrid_manip.errors import SchemaError, TransportError, UnresolvableRef
from hybrid_manip.planner.corpus import full_corpus
from hybrid_manip.planner.grammar import parse_instruction
from hybrid_manip.planner.llm import DEFAULT_API_KEY_ENV, LlmClient, LlmPlanner, plan_llm
from hybrid_manip.planner.mock_server import MockLlmServer, always, http_status, sequence
from hybrid_manip.planner.plan import FailureInfo, RuleBasedPlanner, plan_rule_based

from conftest import PICK_PLACE_INSTRUCTION

GREEN_SPHERE = json.dumps([{"op": "move_to", "target": {"color": "green", "shape": "sphere"}}])
VALID = json.dumps(
    [
        {"op": "move_to", "target": {"color": "red", "shape": "cube"}},
        {"op": "grasp", "target": {"color": "red", "shape": "cube"}},
        {"op": "move_to", "target": {"color": "blue", "shape": "platform"}},
        {"op": "release"},
    ]
)

_worlds = {}


def world(name: str):
    if name not in _worlds:
        _worlds[name] = Env(load_scenario(name)).world_summary()
    return _worlds[name]


@pytest.fixture(scope="module")
def echo_server():
    with MockLlmServer() as server:
        yield server


@pytest.fixture(scope="module")
def echo_client(echo_server):
    client = LlmClient(echo_server.url)
    yield client
    client.close()


def scripted(behaviour, **kwargs):
    server = MockLlmServer(behaviour).start()
    return server, LlmClient(server.url, **kwargs)


def test_pick_place_instruction_equivalence(echo_client):
    w = world("pick_place")
    plan, exchange = plan_llm(PICK_PLACE_INSTRUCTION, w, echo_client)
    ref = plan_rule_based(parse_instruction(PICK_PLACE_INSTRUCTION), w, PICK_PLACE_INSTRUCTION)
    assert plan.subtasks == ref.subtasks
    assert plan.source == "llm" and plan.instruction_hash == ref.instruction_hash
    assert exchange.request.temperature == 0.0
    assert exchange.response.retries_used == 0 and exchange.response.error is None
    assert exchange.response.latency_ms > 0


def test_corpus_equivalence(echo_client):
    corpus = full_corpus()
    assert len(corpus) > 100
    for entry in corpus:
        w = world(entry.scenario)
        llm_plan, _ = plan_llm(entry.instruction, w, echo_client)
        ref = plan_rule_based(parse_instruction(entry.instruction), w, entry.instruction)
        assert llm_plan.subtasks == ref.subtasks, entry


def test_malformed_twice_then_schema_error():
    server, client = scripted(always("[{not json"))
    try:
        with pytest.raises(SchemaError, match="after 2 retries") as info:
            plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
        assert len(server.requests) == 3
        exchange = info.value.exchange
        assert exchange.response.retries_used == 2
        assert exchange.response.plan is None and exchange.response.error
        # corrective prompts embed the validation error
        last = server.requests[-1].body["messages"]
        assert len(last) == 5
        assert "rejected" in last[-1]["content"] and "not valid JSON" in last[-1]["content"]
    finally:
        client.close()
        server.stop()


def test_recovers_after_one_bad_reply():
    server, client = scripted(sequence('{"op": "release"}', VALID))
    try:
        plan, exchange = plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
        assert len(plan) == 4
        assert exchange.response.retries_used == 1
        assert len(server.requests) == 2
    finally:
        client.close()
        server.stop()


def test_zero_retries():
    server, client = scripted(always("nope"), max_retries=0)
    try:
        with pytest.raises(SchemaError):
            plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
        assert len(server.requests) == 1
    finally:
        client.close()
        server.stop()
    with pytest.raises(ValueError):
        LlmClient("http://127.0.0.1:1/", max_retries=-1)


def test_green_sphere_unresolvable_without_retry():
    server, client = scripted(always(GREEN_SPHERE))
    try:
        with pytest.raises(UnresolvableRef):
            plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
        assert len(server.requests) == 1
    finally:
        client.close()
        server.stop()


def test_http_error_is_transport():
    server, client = scripted(http_status(500))
    try:
        with pytest.raises(TransportError, match="HTTP 500"):
            plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
    finally:
        client.close()
        server.stop()


def test_connection_refused():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    client = LlmClient(f"http://127.0.0.1:{port}/v1/chat/completions", timeout=2.0)
    with pytest.raises(TransportError) as info:
        plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
    assert isinstance(info.value.__cause__, httpx.ConnectError)


def test_timeout_is_transport():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    client = LlmClient("http://llm.invalid/v1", transport=httpx.MockTransport(handler))
    with pytest.raises(TransportError, match="timed out"):
        plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)


def test_response_shape_checked():
    client = LlmClient("http://llm.invalid/v1", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"x": 1})))
    with pytest.raises(SchemaError, match="chat-completions"):
        plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)


def test_request_body_and_bearer(monkeypatch):
    monkeypatch.setenv(DEFAULT_API_KEY_ENV, "sk-test-123")
    server, client = scripted(always(VALID), model="test-model", max_tokens=77)
    try:
        plan_llm(PICK_PLACE_INSTRUCTION, world("pick_place"), client)
        req = server.requests[0]
        assert req.headers["Authorization"] == "Bearer sk-test-123"
        assert req.body["model"] == "test-model"
        assert req.body["temperature"] == 0 and req.body["max_tokens"] == 77
        assert req.body["messages"][0]["role"] == "user"
    finally:
        client.close()
        server.stop()


def test_no_key_no_header(monkeypatch):
    monkeypatch.delenv(DEFAULT_API_KEY_ENV, raising=False)
    assert "Authorization" not in LlmClient("http://llm.invalid/").headers()


def test_llm_replan_appends_failure_context(echo_server):
    client = LlmClient(echo_server.url)
    planner = LlmPlanner(client)
    w = world("pick_place")
    prev = planner.plan(PICK_PLACE_INSTRUCTION, w)
    before = len(echo_server.requests)
    new = planner.replan(PICK_PLACE_INSTRUCTION, prev, w, FailureInfo(cursor=1, cause="object_moved", detail="red_cube"))
    prompt = echo_server.requests[before].body["messages"][0]["content"]
    assert "FAILURE:" in prompt and "object_moved" in prompt
    rule = RuleBasedPlanner()
    expected = rule.replan(PICK_PLACE_INSTRUCTION, rule.plan(PICK_PLACE_INSTRUCTION, w), w, FailureInfo(1, "object_moved", "red_cube"))
    assert (new.subtasks, new.origin) == (expected.subtasks, expected.origin)
    assert len(planner.exchanges) == 2 and planner.latency_ms > 0
    client.close()
