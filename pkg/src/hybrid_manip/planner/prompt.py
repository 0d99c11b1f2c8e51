"""Prompt template for the LLM planner. Byte-stable for fixed inputs."""

from __future__ import annotations

import json

from hybrid_manip.env.sim import WorldSummary

SYSTEM_RULES = """\
You convert a tabletop manipulation instruction into a plan for a robot arm with one gripper.
Reply with a JSON array only: no prose, no markdown, no code fences.
Each array element is one subtask object, using exactly these forms:
  {"op": "move_to", "target": REF_OR_LOCATION}
  {"op": "grasp", "target": REF}
  {"op": "release"}
  {"op": "place_on", "target": REF}
  {"op": "avoid_region", "target": REF, "then": REF_OR_LOCATION}
REF is an object with any of the string fields "color", "shape", "name" taken from the world below.
REF_OR_LOCATION is a REF or {"location": NAME} for a named location.
Rules:
- Picking up X is move_to X then grasp X. Placing on Y is move_to Y then release.
- Never grasp a second object before releasing the first.
- To avoid an obstacle, replace the next move_to T with avoid_region (obstacle, then T).
- Refer only to objects and locations listed in the world."""

WORLD_HEADER = "WORLD:"
INSTRUCTION_HEADER = "INSTRUCTION:"
FAILURE_HEADER = "FAILURE:"


def world_json(world: WorldSummary) -> str:
    """Compact, key-sorted world dump with poses rounded to 0.1 mm."""
    data = world.to_dict()
    for obj in data["objects"]:
        obj["pose"] = [round(v, 4) for v in obj["pose"]]
    data["robot"]["ee_pose"] = [round(v, 4) for v in data["robot"]["ee_pose"]]
    data["locations"] = {k: [round(v, 4) for v in p] for k, p in sorted(data.get("locations", {}).items())}
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def render_prompt(instr: str, world: WorldSummary, failure_context: str | None = None) -> str:
    parts = [SYSTEM_RULES, "", WORLD_HEADER, world_json(world), "", INSTRUCTION_HEADER, " ".join(instr.split())]
    if failure_context:
        parts += [
            "",
            FAILURE_HEADER,
            failure_context,
            "The world above is the current state. Return the full plan for the instruction.",
        ]
    return "\n".join(parts) + "\n"


def split_prompt(prompt: str) -> tuple[str, WorldSummary]:
    """Recover (instruction, world) from a rendered prompt. Used by the mock server."""
    lines = prompt.split("\n")
    w = lines.index(WORLD_HEADER)
    i = lines.index(INSTRUCTION_HEADER)
    return lines[i + 1], WorldSummary.from_json(lines[w + 1])
