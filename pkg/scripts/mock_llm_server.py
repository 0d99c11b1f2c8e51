"""Serve the mock chat-completions endpoint for manual runs of the llm planner.

    python3 scripts/mock_llm_server.py --port 8765
    hybrid-manip plan "pick up the red cube" --planner llm --llm-url http://127.0.0.1:8765/v1/chat/completions
"""

from __future__ import annotations

import argparse

from hybrid_manip.planner.mock_server import BEHAVIOURS, MockLlmServer


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--behaviour", choices=sorted(BEHAVIOURS), default="echo")
    args = parser.parse_args()
    server = MockLlmServer(BEHAVIOURS[args.behaviour], args.host, args.port)
    print(f"serving {args.behaviour} on http://{args.host}:{args.port}/v1/chat/completions", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
