"""Load and dump ScenarioSpec YAML files."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import yaml

from hybrid_manip.env.types import (
    EeNear,
    Holding,
    NotHolding,
    ObjectOn,
    ObjectSpec,
    Perturbation,
    ScenarioSpec,
    Sorted,
    WorkspaceBounds,
)
from hybrid_manip.errors import InvalidScenario

BUILTIN_SCENARIOS = ("pick_place", "sort_3", "obstacle_course", "reach_cube")

_SCENARIO_KEYS = {"name", "sim_dt", "max_steps", "bounds", "ee_start", "objects", "goal", "perturbations", "instruction"}


def _goal_from_dict(data: dict):
    kind = data.get("type")
    try:
        if kind == "ee_near":
            return EeNear(tuple(float(v) for v in data["target"]), float(data.get("tol", 0.02)))
        if kind == "object_on":
            return ObjectOn(data["object"], data["platform"], float(data.get("tol", 0.02)))
        if kind == "holding":
            return Holding(data["object"])
        if kind == "not_holding":
            return NotHolding()
        if kind == "sorted":
            mapping = tuple(sorted((str(k), str(v)) for k, v in data["mapping"].items()))
            return Sorted(mapping, float(data.get("tol", 0.02)))
    except KeyError as exc:
        raise InvalidScenario(f"goal {kind!r} missing field {exc}") from None
    raise InvalidScenario(f"unknown goal type {kind!r}")


def _goal_to_dict(goal) -> dict:
    if isinstance(goal, EeNear):
        return {"type": "ee_near", "target": list(goal.target), "tol": goal.tol}
    if isinstance(goal, ObjectOn):
        return {"type": "object_on", "object": goal.object, "platform": goal.platform, "tol": goal.tol}
    if isinstance(goal, Holding):
        return {"type": "holding", "object": goal.object}
    if isinstance(goal, NotHolding):
        return {"type": "not_holding"}
    if isinstance(goal, Sorted):
        return {"type": "sorted", "mapping": dict(goal.mapping), "tol": goal.tol}
    raise TypeError(goal)


def scenario_from_dict(data: dict) -> ScenarioSpec:
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise InvalidScenario(f"unknown scenario keys: {sorted(unknown)}")
    try:
        bounds = WorkspaceBounds(tuple(data["bounds"]["min"]), tuple(data["bounds"]["max"]))
        objects = [
            ObjectSpec(
                id=str(o["id"]),
                shape=o["shape"],
                color=o["color"],
                half_extent=o["half_extent"],
                pose=o["pose"],
                graspable=o.get("graspable", False),
            )
            for o in data.get("objects", [])
        ]
        perturbations = [
            Perturbation(int(p["at_step"]), str(p["object"]), tuple(float(v) for v in p["pose"]))
            for p in data.get("perturbations", []) or []
        ]
        spec = ScenarioSpec(
            name=str(data["name"]),
            bounds=bounds,
            objects=objects,
            goal=_goal_from_dict(data["goal"]),
            max_steps=int(data["max_steps"]),
            perturbations=perturbations,
            sim_dt=float(data.get("sim_dt", 0.1)),
            ee_start=tuple(float(v) for v in data.get("ee_start", (0.0, 0.0, 0.3))),
            instruction=str(data.get("instruction", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"malformed scenario: {exc}") from None
    spec.validate()
    return spec


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "name": spec.name,
        "sim_dt": spec.sim_dt,
        "max_steps": spec.max_steps,
        "bounds": {"min": list(spec.bounds.low), "max": list(spec.bounds.high)},
        "ee_start": list(spec.ee_start),
        "instruction": spec.instruction,
        "objects": [
            {
                "id": o.id,
                "shape": o.shape.value,
                "color": o.color.value,
                "half_extent": o.half_extent,
                "pose": o.pose.tolist(),
                "graspable": o.graspable,
            }
            for o in spec.objects
        ],
        "goal": _goal_to_dict(spec.goal),
        "perturbations": [
            {"at_step": p.at_step, "object": p.object_id, "pose": list(p.new_pose)} for p in spec.perturbations
        ],
    }


def load_scenario(path_or_name: str | Path) -> ScenarioSpec:
    """Load a scenario from a YAML path, or by name for the bundled ones."""
    path = Path(path_or_name)
    if path.suffix in (".yaml", ".yml") or path.exists():
        text = path.read_text()
    elif str(path_or_name) in BUILTIN_SCENARIOS:
        text = resources.files("hybrid_manip").joinpath("scenarios", f"{path_or_name}.yaml").read_text()
    else:
        raise InvalidScenario(f"no scenario file or bundled scenario named {str(path_or_name)!r}")
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise InvalidScenario("scenario file must contain a mapping")
    return scenario_from_dict(data)


def dump_scenario(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(scenario_to_dict(spec), sort_keys=False)
