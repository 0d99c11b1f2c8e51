"""Task plans: subtask vocabulary, rule-based expansion, validation, and replanning."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Protocol, Union

import numpy as np

from hybrid_manip.env.sim import ObjectSummary, WorldSummary, object_on
from hybrid_manip.errors import AmbiguousRef, InvalidPlan, PlanningError, SchemaError, UnresolvableRef
from hybrid_manip.planner.grammar import (
    AvoidCmd,
    GraspCmd,
    MoveToCmd,
    NamedLocation,
    ObjectRef,
    ParsedCommandList,
    PickUpCmd,
    PlaceOnCmd,
    PutCmd,
    SortCmd,
    Target,
    parse_instruction,
)

PLACE_TOL = 0.02
RULE_BASED = "rule_based"
LLM = "llm"


# Subtasks ---------------------------------------------------------------------


@dataclass(frozen=True)
class MoveTo:
    target: Target

    def __str__(self) -> str:
        return f"MoveTo({self.target})"


@dataclass(frozen=True)
class Grasp:
    object: ObjectRef

    def __str__(self) -> str:
        return f"Grasp({self.object})"


@dataclass(frozen=True)
class Release:
    def __str__(self) -> str:
        return "Release"


@dataclass(frozen=True)
class PlaceOn:
    target: ObjectRef

    def __str__(self) -> str:
        return f"PlaceOn({self.target})"


@dataclass(frozen=True)
class AvoidRegion:
    obstacle: ObjectRef
    then: Target

    def __str__(self) -> str:
        return f"AvoidRegion({self.obstacle}, then={self.then})"


Subtask = Union[MoveTo, Grasp, Release, PlaceOn, AvoidRegion]
OPS = ("move_to", "grasp", "release", "place_on", "avoid_region")


def subtask_kind(sub: Subtask) -> str:
    return {MoveTo: "move_to", Grasp: "grasp", Release: "release", PlaceOn: "place_on", AvoidRegion: "avoid_region"}[type(sub)]


def move_target(sub: Subtask) -> Target | None:
    """Where the end-effector is headed for motion subtasks."""
    if isinstance(sub, MoveTo):
        return sub.target
    if isinstance(sub, AvoidRegion):
        return sub.then
    return None


def instruction_hash(instr: str) -> str:
    return hashlib.sha256(instr.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TaskPlan:
    subtasks: tuple[Subtask, ...]
    source: str
    instruction_hash: str
    # full-plan index of each subtask, so replans can tell what already ran
    origin: tuple[int, ...] = ()
    goal_satisfied: bool = False

    def __post_init__(self):
        if not self.origin:
            object.__setattr__(self, "origin", tuple(range(len(self.subtasks))))
        if len(self.origin) != len(self.subtasks):
            raise ValueError("origin must have one entry per subtask")

    def __len__(self) -> int:
        return len(self.subtasks)

    def __iter__(self):
        return iter(self.subtasks)

    def __getitem__(self, i):
        return self.subtasks[i]

    def describe(self) -> list[str]:
        return [str(s) for s in self.subtasks]

    def referenced_ids(self, world: WorldSummary) -> set[str]:
        """Ids of every object the plan mentions, resolved against ``world``."""
        return {resolve_ref(ref, world).id for sub in self.subtasks for ref in _refs(sub) if isinstance(ref, ObjectRef)}


def _refs(sub: Subtask) -> list[Target]:
    if isinstance(sub, MoveTo):
        return [sub.target]
    if isinstance(sub, Grasp):
        return [sub.object]
    if isinstance(sub, PlaceOn):
        return [sub.target]
    if isinstance(sub, AvoidRegion):
        return [sub.obstacle, sub.then]
    return []


# Reference resolution ------------------------------------------------------------


def matching_objects(ref: ObjectRef, world: WorldSummary) -> list[ObjectSummary]:
    return [
        o
        for o in world.objects
        if (ref.name is None or o.id == ref.name)
        and (ref.color is None or o.color == ref.color)
        and (ref.shape is None or o.shape == ref.shape)
    ]


def resolve_ref(ref: ObjectRef, world: WorldSummary) -> ObjectSummary:
    found = matching_objects(ref, world)
    if not found:
        raise UnresolvableRef(f"no object matches {ref.to_dict()} in the world")
    if len(found) > 1:
        ids = ", ".join(sorted(o.id for o in found))
        raise AmbiguousRef(f"{ref.to_dict()} matches several objects ({ids}); add a color or name")
    return found[0]


def canonical(ref: ObjectRef, world: WorldSummary) -> ObjectRef:
    obj = resolve_ref(ref, world)
    return ObjectRef(color=obj.color, shape=obj.shape, name=obj.id)


def canonical_target(target: Target, world: WorldSummary) -> Target:
    if isinstance(target, NamedLocation):
        if target.name not in world.locations:
            raise UnresolvableRef(f"unknown location {target.name!r}; known: {', '.join(sorted(world.locations))}")
        return target
    return canonical(target, world)


def target_position(target: Target, world: WorldSummary, on_top: bool = False) -> np.ndarray:
    """Goal point for a target: object center, or top-center for surfaces to place onto."""
    if isinstance(target, NamedLocation):
        if target.name not in world.locations:
            raise UnresolvableRef(f"unknown location {target.name!r}")
        return np.asarray(world.locations[target.name], dtype=np.float64)
    obj = resolve_ref(target, world)
    return obj.top_center() if on_top else np.asarray(obj.pose, dtype=np.float64)


# Validation ------------------------------------------------------------------------


def validate_plan(plan: TaskPlan, world: WorldSummary) -> None:
    """Check refs resolve uniquely, grasps target graspable objects, and one gripper suffices."""
    if not plan.subtasks and not plan.goal_satisfied:
        raise InvalidPlan("plan is empty")
    holding = world.held
    for i, sub in enumerate(plan.subtasks):
        for ref in _refs(sub):
            if isinstance(ref, ObjectRef):
                resolve_ref(ref, world)
            else:
                canonical_target(ref, world)
        if isinstance(sub, Grasp):
            obj = resolve_ref(sub.object, world)
            if not obj.graspable:
                raise InvalidPlan(f"subtask {i}: {obj.id} is not graspable")
            if holding is not None and holding != obj.id:
                raise InvalidPlan(f"subtask {i}: grasp {obj.id} while still holding {holding}")
            holding = obj.id
        elif isinstance(sub, (Release, PlaceOn)):
            holding = None


# Rule-based expansion -------------------------------------------------------------------


def expand_commands(parsed: ParsedCommandList, world: WorldSummary) -> list[Subtask]:
    out: list[Subtask] = []
    pending_avoid: ObjectRef | None = None

    def move(target: Target):
        nonlocal pending_avoid
        if pending_avoid is not None:
            out.append(AvoidRegion(pending_avoid, target))
            pending_avoid = None
        else:
            out.append(MoveTo(target))

    def pick(ref: ObjectRef):
        move(ref)
        out.append(Grasp(ref))

    def place(target: ObjectRef):
        move(target)
        out.append(Release())

    for cmd in parsed.commands:
        if isinstance(cmd, PickUpCmd):
            pick(cmd.ref)
        elif isinstance(cmd, GraspCmd):
            out.append(Grasp(cmd.ref))
        elif isinstance(cmd, PlaceOnCmd):
            place(cmd.target)
        elif isinstance(cmd, PutCmd):
            pick(cmd.ref)
            place(cmd.target)
        elif isinstance(cmd, MoveToCmd):
            move(cmd.target)
        elif isinstance(cmd, AvoidCmd):
            pending_avoid = cmd.ref
        elif isinstance(cmd, SortCmd):
            items = sorted((o for o in world.objects if o.shape == cmd.shape and o.graspable), key=lambda o: o.id)
            if not items:
                raise UnresolvableRef(f"no graspable {cmd.shape} objects to sort")
            for obj in items:
                platform = resolve_ref(ObjectRef(color=obj.color, shape="platform"), world)
                pick(ObjectRef(color=obj.color, shape=obj.shape, name=obj.id))
                place(ObjectRef(color=platform.color, shape=platform.shape, name=platform.id))
        else:
            raise TypeError(f"unknown command {cmd!r}")
    if pending_avoid is not None:
        raise InvalidPlan(f"'avoid {pending_avoid}' is not followed by any motion")
    return out


def plan_rule_based(parsed: ParsedCommandList, world: WorldSummary, instr: str = "") -> TaskPlan:
    if not parsed.commands:
        raise PlanningError("nothing to plan: empty command list")
    plan = TaskPlan(tuple(expand_commands(parsed, world)), RULE_BASED, instruction_hash(instr))
    validate_plan(plan, world)
    return plan


# JSON form shared with the LLM path ---------------------------------------------------------


def subtask_to_json(sub: Subtask) -> dict:
    kind = subtask_kind(sub)
    if isinstance(sub, Release):
        return {"op": kind}
    if isinstance(sub, AvoidRegion):
        return {"op": kind, "target": sub.obstacle.to_dict(), "then": sub.then.to_dict()}
    ref = sub.object if isinstance(sub, Grasp) else sub.target
    return {"op": kind, "target": ref.to_dict()}


def plan_to_json(subtasks) -> str:
    return json.dumps([subtask_to_json(s) for s in subtasks], sort_keys=True)


_REF_KEYS = {"color", "shape", "name"}


def _ref_from_json(data, where: str, allow_location: bool) -> Target:
    if not isinstance(data, dict) or not data:
        raise SchemaError(f"{where}: expected a non-empty object")
    if allow_location and "location" in data:
        if set(data) != {"location"} or not isinstance(data["location"], str):
            raise SchemaError(f"{where}: a location target has exactly one string field 'location'")
        return NamedLocation(data["location"])
    extra = set(data) - _REF_KEYS
    if extra:
        raise SchemaError(f"{where}: unknown fields {sorted(extra)}; allowed: color, shape, name")
    for k, v in data.items():
        if not isinstance(v, str):
            raise SchemaError(f"{where}.{k}: expected a string")
    return ObjectRef(color=data.get("color"), shape=data.get("shape"), name=data.get("name"))


def subtasks_from_json(text: str) -> list[Subtask]:
    """Parse the strict-JSON subtask array; raises SchemaError on any deviation."""
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise SchemaError(f"reply is not valid JSON: {exc}") from None
    if not isinstance(data, list) or not data:
        raise SchemaError("reply must be a non-empty JSON array of subtasks")
    out: list[Subtask] = []
    for i, item in enumerate(data):
        where = f"subtask[{i}]"
        if not isinstance(item, dict) or "op" not in item:
            raise SchemaError(f"{where}: expected an object with an 'op' field")
        op = item["op"]
        allowed = {"release": {"op"}, "avoid_region": {"op", "target", "then"}}.get(op, {"op", "target"})
        if op not in OPS:
            raise SchemaError(f"{where}: unknown op {op!r}; allowed: {', '.join(OPS)}")
        if set(item) != allowed:
            raise SchemaError(f"{where}: op {op!r} takes fields {sorted(allowed)}, got {sorted(item)}")
        if op == "release":
            out.append(Release())
        elif op == "move_to":
            out.append(MoveTo(_ref_from_json(item["target"], where + ".target", True)))
        elif op == "grasp":
            out.append(Grasp(_ref_from_json(item["target"], where + ".target", False)))
        elif op == "place_on":
            out.append(PlaceOn(_ref_from_json(item["target"], where + ".target", False)))
        else:
            out.append(
                AvoidRegion(
                    _ref_from_json(item["target"], where + ".target", False),
                    _ref_from_json(item["then"], where + ".then", True),
                )
            )
    return out


# Replanning ------------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureInfo:
    cursor: int  # index of the failed or invalidated subtask in the previous plan
    cause: str  # monitor event kind, e.g. "object_moved"
    detail: str = ""

    def describe(self, plan: TaskPlan) -> str:
        sub = plan.subtasks[self.cursor] if 0 <= self.cursor < len(plan) else None
        return f"subtask {self.cursor} ({sub}) interrupted by {self.cause}" + (f": {self.detail}" if self.detail else "")


@dataclass(frozen=True)
class PlanUnit:
    """A run of subtasks with one checkable outcome (pick, place, or a bare move)."""

    start: int
    stop: int
    grasped: str | None = None  # object held after the pick part
    surface: str | None = None  # platform the object rests on after the place part
    pick_stop: int | None = None


def plan_units(subtasks, world: WorldSummary) -> list[PlanUnit]:
    def oid(ref):
        return resolve_ref(ref, world).id if isinstance(ref, ObjectRef) else None

    units = []
    i, n = 0, len(subtasks)
    last_grasped = None
    while i < n:
        start = i
        grasped = surface = pick_stop = None
        sub = subtasks[i]
        if move_target(sub) is not None and i + 1 < n and isinstance(subtasks[i + 1], Grasp):
            i += 1
            sub = subtasks[i]
        if isinstance(sub, Grasp):
            grasped = last_grasped = oid(sub.object)
            pick_stop = i + 1
            i += 1
            sub = subtasks[i] if i < n else None
            if sub is None or not (move_target(sub) is not None and i + 1 < n and isinstance(subtasks[i + 1], Release)):
                units.append(PlanUnit(start, i, grasped, None, pick_stop))
                continue
        if sub is not None and move_target(sub) is not None and i + 1 < n and isinstance(subtasks[i + 1], Release):
            surface = oid(move_target(sub))
            grasped = grasped or last_grasped
            i += 2
        elif isinstance(sub, PlaceOn):
            surface = oid(sub.target)
            grasped = grasped or last_grasped
            i += 1
        else:
            i += 1
        units.append(PlanUnit(start, i, grasped, surface, pick_stop))
    return units


def _resting_on(obj_id: str, surface_id: str, world: WorldSummary) -> bool:
    obj, surface = world.find(obj_id), world.find(surface_id)
    if obj is None or surface is None or world.held == obj_id:
        return False
    return object_on(obj.pose, obj.half_extent, surface, PLACE_TOL)


def remaining_plan(full: TaskPlan, world: WorldSummary, done_before: int) -> TaskPlan:
    """Drop leading units of ``full`` whose outcome already holds in ``world``.

    ``done_before`` is the full-plan index of the first subtask that had not
    completed in the previous plan; bare motions before it count as done.
    """
    keep_from = 0
    for unit in plan_units(full.subtasks, world):
        if unit.surface is not None and unit.grasped is not None:
            if _resting_on(unit.grasped, unit.surface, world):
                keep_from = unit.stop
                continue
            if unit.pick_stop is not None and world.held == unit.grasped:
                keep_from = unit.pick_stop
            break
        if unit.grasped is not None:
            if world.held == unit.grasped:
                keep_from = unit.stop
                continue
            break
        if unit.stop <= done_before:
            keep_from = unit.stop
            continue
        break
    rest = full.subtasks[keep_from:]
    return TaskPlan(
        rest,
        full.source,
        full.instruction_hash,
        origin=full.origin[keep_from:],
        goal_satisfied=not rest,
    )


class Planner(Protocol):
    source: str

    def plan(self, instr: str, world: WorldSummary, failure_context: str | None = None) -> TaskPlan: ...

    def replan(self, instr: str, prev: TaskPlan, world: WorldSummary, failure: FailureInfo) -> TaskPlan: ...


@dataclass
class RuleBasedPlanner:
    source: str = RULE_BASED
    calls: int = field(default=0)

    def plan(self, instr: str, world: WorldSummary, failure_context: str | None = None) -> TaskPlan:
        # the grammar path recomputes from scratch; failure context only matters to the LLM
        self.calls += 1
        return plan_rule_based(parse_instruction(instr), world, instr)

    def replan(self, instr: str, prev: TaskPlan, world: WorldSummary, failure: FailureInfo) -> TaskPlan:
        return replan(instr, prev, world, failure, self)


def replan(instr: str, prev: TaskPlan, world: WorldSummary, failure: FailureInfo, planner: Planner) -> TaskPlan:
    """Fresh plan for what is left: recompute against ``world``, then drop finished units."""
    full = planner.plan(instr, world, failure.describe(prev))
    cursor = min(max(failure.cursor, 0), len(prev))
    done_before = prev.origin[cursor] if cursor < len(prev) else (prev.origin[-1] + 1 if prev.origin else 0)
    rest = remaining_plan(full, world, done_before)
    validate_plan(rest, world)
    return rest
