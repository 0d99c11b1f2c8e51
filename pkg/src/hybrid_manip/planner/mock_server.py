"""Local stand-in for a chat-completions endpoint, for tests and offline runs.

The default behaviour is a compliant model: it reads the world and
instruction back out of the prompt and answers with the rule-based plan as
JSON. Other behaviours script malformed or fixed replies.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from hybrid_manip.errors import HybridManipError
from hybrid_manip.planner.grammar import parse_instruction
from hybrid_manip.planner.plan import plan_rule_based, plan_to_json
from hybrid_manip.planner.prompt import split_prompt

Behaviour = Callable[[list[dict], int], "str | tuple[int, str]"]


def echo_rule_based(messages: list[dict], call: int) -> str:
    """Answer like a perfectly compliant model: the grammar planner's output."""
    instr, world = split_prompt(messages[0]["content"])
    try:
        plan = plan_rule_based(parse_instruction(instr), world, instr)
    except HybridManipError as exc:
        return json.dumps({"error": str(exc)})
    return plan_to_json(plan.subtasks)


def always(content: str) -> Behaviour:
    return lambda messages, call: content


def sequence(*contents: str) -> Behaviour:
    """Reply with each content in turn, repeating the last one."""
    return lambda messages, call: contents[min(call, len(contents) - 1)]


def http_status(code: int) -> Behaviour:
    return lambda messages, call: (code, "scripted failure")


BEHAVIOURS = {"echo": echo_rule_based, "malformed": always("this is not json ["), "status500": http_status(500)}


@dataclass
class RecordedRequest:
    path: str
    headers: dict
    body: dict


@dataclass
class MockLlmServer:
    behaviour: Behaviour = echo_rule_based
    host: str = "127.0.0.1"
    port: int = 0
    requests: list[RecordedRequest] = field(default_factory=list)

    def __post_init__(self):
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self._lock = threading.Lock()

    @property
    def url(self) -> str:
        if self._server is None:
            raise RuntimeError("server is not running")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                    messages = body["messages"]
                except (ValueError, KeyError):
                    return self._send(400, {"error": "bad request body"})
                with mock._lock:
                    call = len(mock.requests)
                    mock.requests.append(RecordedRequest(self.path, dict(self.headers), body))
                reply = mock.behaviour(messages, call)
                if isinstance(reply, tuple):
                    return self._send(reply[0], {"error": reply[1]})
                self._send(200, {"choices": [{"index": 0, "message": {"role": "assistant", "content": reply}}]})

            def _send(self, code: int, payload: dict):
                data = json.dumps(payload).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self) -> "MockLlmServer":
        self._server = ThreadingHTTPServer((self.host, self.port), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def serve_forever(self) -> None:
        self._server = ThreadingHTTPServer((self.host, self.port), self._handler())
        try:
            self._server.serve_forever()
        finally:
            self._server.server_close()

    def __enter__(self) -> "MockLlmServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
