"""Plan, execute subtasks with skills, monitor every step, replan on change.

Every episode leaves a trace of single-letter records::

    P  plan produced            X  subtask started
    M  one step plus monitor    R  replan triggered
    T  terminal status

and a well-formed trace matches ``(P(XM*)*R?)*T``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from hybrid_manip.env.sim import Env, WorldSummary, object_on
from hybrid_manip.env.types import Action, Grip
from hybrid_manip.errors import DimensionMismatch, HybridManipError, PlannerFailure, ReplanLimitExceeded
from hybrid_manip.integration.skills import SkillLibrary
from hybrid_manip.planner.grammar import NamedLocation, Target
from hybrid_manip.planner.plan import (
    PLACE_TOL,
    AvoidRegion,
    FailureInfo,
    Grasp,
    MoveTo,
    PlaceOn,
    Planner,
    Release,
    Subtask,
    TaskPlan,
    resolve_ref,
)
from hybrid_manip.rl.skills import SKILL_OBS_DIM, skill_observation

RUNNING, SUCCEEDED, FAILED = "running", "succeeded", "failed"
TRACE_PATTERN = re.compile(r"^(P(XM*)*R?)*T$")
SKILL_FOR = {MoveTo: "reach", Grasp: "grasp", PlaceOn: "place", AvoidRegion: "avoid_reach"}


@dataclass(frozen=True)
class ExecutionConfig:
    max_steps_per_subtask: int = 100
    max_replans: int = 3
    monitor_pose_tol: float = 0.02
    collision_burst: int = 3

    def __post_init__(self):
        if self.max_steps_per_subtask <= 0 or self.monitor_pose_tol <= 0 or self.collision_burst <= 0:
            raise ValueError("execution limits and tolerances must be positive")
        if self.max_replans < 0:
            raise ValueError("max_replans must be >= 0")


# Monitor events ------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectMoved:
    id: str
    displacement: float
    kind: str = "object_moved"


@dataclass(frozen=True)
class GraspLost:
    id: str
    kind: str = "grasp_lost"


@dataclass(frozen=True)
class SubtaskTimeout:
    steps: int
    kind: str = "subtask_timeout"


@dataclass(frozen=True)
class CollisionBurst:
    count: int
    kind: str = "collision_burst"


MonitorEvent = Union[ObjectMoved, GraspLost, SubtaskTimeout, CollisionBurst]
REPLAN_WORTHY = ("object_moved", "grasp_lost", "subtask_timeout")


def event_dict(ev) -> dict:
    d = {k: getattr(ev, k) for k in ev.__dataclass_fields__}
    if "displacement" in d:
        d["displacement"] = round(d["displacement"], 6)
    return d


@dataclass(frozen=True)
class MonitorContext:
    """What the executor expects to be true, against which the monitor compares."""

    referenced: frozenset[str] = frozenset()
    expected_held: str | None = None
    subtask_steps: int = 0
    collision_streak: int = 0


def monitor(
    env: Env, tracked: WorldSummary, cfg: ExecutionConfig, ctx: MonitorContext = MonitorContext()
) -> list[MonitorEvent]:
    """Events for the current step. Pure: reads ``env`` and its arguments only."""
    events = []
    held = env.state.robot.held
    for obj in tracked.objects:
        if obj.id not in ctx.referenced or obj.id == held:
            continue
        disp = float(np.linalg.norm(env.object_pose(obj.id) - np.asarray(obj.pose)))
        if disp > cfg.monitor_pose_tol:
            events.append(ObjectMoved(obj.id, disp))
    if ctx.expected_held is not None and held != ctx.expected_held:
        events.append(GraspLost(ctx.expected_held))
    if ctx.subtask_steps >= cfg.max_steps_per_subtask:
        events.append(SubtaskTimeout(ctx.subtask_steps))
    if ctx.collision_streak == cfg.collision_burst:
        events.append(CollisionBurst(ctx.collision_streak))
    return events


# Subtask geometry -------------------------------------------------------------------


def goal_position(target: Target, world: WorldSummary) -> np.ndarray:
    """Graspable objects are approached at their center, surfaces at their top-center."""
    if isinstance(target, NamedLocation):
        return np.asarray(world.locations[target.name], dtype=np.float64)
    obj = resolve_ref(target, world)
    return np.asarray(obj.pose, dtype=np.float64) if obj.graspable else obj.top_center()


def subtask_target(sub: Subtask, world: WorldSummary) -> np.ndarray:
    if isinstance(sub, MoveTo):
        return goal_position(sub.target, world)
    if isinstance(sub, Grasp):
        return goal_position(sub.object, world)
    if isinstance(sub, PlaceOn):
        return resolve_ref(sub.target, world).top_center()
    if isinstance(sub, AvoidRegion):
        return goal_position(sub.then, world)
    return np.asarray(world.ee_pose, dtype=np.float64)


def build_skill_observation(sub: Subtask, env: Env, expected_dim: int = SKILL_OBS_DIM) -> np.ndarray:
    if expected_dim != SKILL_OBS_DIM:
        raise DimensionMismatch(f"skill observations have {SKILL_OBS_DIM} entries, checkpoint expects {expected_dim}")
    world = env.world_summary()
    obstacle = None
    if isinstance(sub, AvoidRegion):
        obstacle = env._object(resolve_ref(sub.obstacle, world).id)
    return skill_observation(env, subtask_target(sub, world), obstacle)


def subtask_success(
    sub: Subtask, env: Env, cfg: ExecutionConfig, placing: str | None = None, collided: bool = False
) -> bool:
    """Completion predicate; ``placing`` names the object a PlaceOn is putting down."""
    world = env.world_summary()
    held = env.state.robot.held
    if isinstance(sub, (MoveTo, AvoidRegion)):
        near = np.linalg.norm(env.state.robot.ee_pose - subtask_target(sub, world)) <= cfg.monitor_pose_tol
        return bool(near and not (isinstance(sub, AvoidRegion) and collided))
    if isinstance(sub, Grasp):
        return held == resolve_ref(sub.object, world).id
    if isinstance(sub, Release):
        return held is None
    if isinstance(sub, PlaceOn):
        surface = env._object(resolve_ref(sub.target, world).id)
        candidates = [placing] if placing else [o.id for o in env.state.objects if o.graspable]
        return any(
            cid != held and object_on(env.object_pose(cid), env._object(cid).half_extent, surface, PLACE_TOL)
            for cid in candidates
        )
    raise TypeError(f"unknown subtask {sub!r}")


# Execution -------------------------------------------------------------------------------


@dataclass
class SubtaskOutcome:
    subtask: str
    outcome: str  # "done" | "interrupted" | "failed"
    steps: int


@dataclass
class EpisodeResult:
    status: str
    reason: str
    total_steps: int
    sim_dt: float
    replans_used: int
    cumulative_reward: float
    subtasks: list[SubtaskOutcome] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    llm_latency_ms: float = 0.0
    error: str | None = None

    @property
    def wall_seconds(self) -> float:
        return self.total_steps * self.sim_dt

    @property
    def succeeded(self) -> bool:
        return self.status == SUCCEEDED

    def trace_kinds(self) -> str:
        return "".join(r["kind"] for r in self.trace)


def validate_trace(trace) -> bool:
    """True when the record kinds follow plan / execute / monitor / replan / terminal order."""
    kinds = trace if isinstance(trace, str) else "".join(r["kind"] for r in trace)
    return TRACE_PATTERN.match(kinds) is not None


def _tracked_update(tracked: WorldSummary, env: Env, ids) -> WorldSummary:
    ids = set(ids)
    if not ids:
        return tracked
    objects = [
        replace(o, pose=tuple(float(v) for v in env.object_pose(o.id))) if o.id in ids else o for o in tracked.objects
    ]
    return replace(tracked, objects=objects)


def _action_record(action: Action) -> dict:
    return {"delta": [round(float(v), 9) for v in action.delta], "grip": action.grip.value}


class _Episode:
    def __init__(self, instr, env, planner, skills, cfg):
        self.instr, self.env, self.planner, self.skills, self.cfg = instr, env, planner, skills, cfg
        self.trace: list[dict] = []
        self.events: list[dict] = []
        self.outcomes: list[SubtaskOutcome] = []
        self.reward = 0.0
        self.replans = 0
        self.steps = 0

    def record(self, kind: str, **data):
        self.trace.append({"kind": kind, "step": self.env.step_count, **data})

    def adopt(self, plan: TaskPlan) -> None:
        self.skills.require({SKILL_FOR[type(s)] for s in plan.subtasks if type(s) in SKILL_FOR})
        self.plan = plan
        self.cursor = 0
        self.tracked = self.env.world_summary()
        self.referenced = frozenset(plan.referenced_ids(self.tracked))
        self.record("P", source=plan.source, plan=plan.describe(), goal_satisfied=plan.goal_satisfied)

    def finish(self, status: str, reason: str, error: str | None = None) -> EpisodeResult:
        self.record("T", status=status, reason=reason)
        latency = float(getattr(self.planner, "latency_ms", 0.0) or 0.0)
        return EpisodeResult(
            status, reason, self.env.step_count, self.env.sim_dt, self.replans, self.reward,
            self.outcomes, self.events, self.trace, latency, error,
        )

    def call_planner(self, fn, *args) -> TaskPlan:
        try:
            return fn(*args)
        except HybridManipError as exc:
            result = self.finish(FAILED, "planner_error", f"{type(exc).__name__}: {exc}")
            err = PlannerFailure(f"planning failed: {exc}")
            err.result = result
            raise err from exc

    def run(self) -> EpisodeResult:
        env, cfg = self.env, self.cfg
        self.adopt(self.call_planner(self.planner.plan, self.instr, env.world_summary()))
        expected_held = env.state.robot.held
        while True:
            if env.check_goal():
                return self.finish(SUCCEEDED, "goal_satisfied")
            if self.cursor >= len(self.plan):
                return self.finish(FAILED, "plan_exhausted")
            sub = self.plan[self.cursor]
            placing = expected_held
            self.record("X", cursor=self.cursor, subtask=str(sub))
            sub_steps, streak, collided = 0, 0, False
            replan_cause = None
            while True:
                if subtask_success(sub, env, cfg, placing, collided):
                    self.outcomes.append(SubtaskOutcome(str(sub), "done", sub_steps))
                    if isinstance(sub, Grasp):
                        expected_held = env.state.robot.held
                    elif isinstance(sub, (Release, PlaceOn)):
                        expected_held = None
                    self.cursor += 1
                    break
                if env.done:
                    self.outcomes.append(SubtaskOutcome(str(sub), "failed", sub_steps))
                    return self.finish(FAILED, "episode_step_limit")
                if isinstance(sub, Release):
                    action = Action(np.zeros(3), Grip.OPEN)
                else:
                    action = self.skills.act(SKILL_FOR[type(sub)], build_skill_observation(sub, env))
                _, reward, _, info = env.step(action)
                self.reward += reward
                sub_steps += 1
                streak = streak + 1 if info.collision else 0
                collided = collided or info.collision
                # grip changes made by the active subtask are expected, not failures
                if info.released and isinstance(sub, (Release, PlaceOn)):
                    expected_held = None
                if info.grasped and isinstance(sub, Grasp):
                    expected_held = info.grasped
                refresh = [o for o in (env.state.robot.held, info.released) if o]
                self.tracked = _tracked_update(self.tracked, env, refresh)
                ctx = MonitorContext(self.referenced, expected_held, sub_steps, streak)
                events = monitor(env, self.tracked, cfg, ctx)
                dicts = [event_dict(e) for e in events]
                self.events.extend({"step": env.step_count, **d} for d in dicts)
                self.record(
                    "M", subtask=str(sub), action=_action_record(action), reward=round(reward, 9), events=dicts,
                    collision=info.collision,
                )
                if env.check_goal():
                    self.outcomes.append(SubtaskOutcome(str(sub), "done", sub_steps))
                    break
                worthy = [e for e in events if e.kind in REPLAN_WORTHY]
                if worthy:
                    replan_cause = worthy[0]
                    break
            if replan_cause is None:
                continue
            self.outcomes.append(SubtaskOutcome(str(sub), "interrupted", sub_steps))
            if self.replans >= cfg.max_replans:
                return self.finish(FAILED, "replan_limit", str(ReplanLimitExceeded(f"{cfg.max_replans} replans used")))
            self.replans += 1
            failure = FailureInfo(self.cursor, replan_cause.kind, json.dumps(event_dict(replan_cause), sort_keys=True))
            self.record("R", cause=replan_cause.kind, cursor=self.cursor)
            world = env.world_summary()
            self.adopt(self.call_planner(self.planner.replan, self.instr, self.plan, world, failure))
            expected_held = env.state.robot.held


def execute_task(
    instr: str, env: Env, planner: Planner, skills: SkillLibrary, cfg: ExecutionConfig = ExecutionConfig()
) -> EpisodeResult:
    """Run one instruction to a terminal status on an already-reset env.

    Planner errors raise PlannerFailure with the failed EpisodeResult attached as ``.result``.
    """
    return _Episode(instr, env, planner, skills, cfg).run()


def dumps_trace(trace: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in trace)


def write_trace(trace: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_trace(trace))
    return path


def read_trace(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
