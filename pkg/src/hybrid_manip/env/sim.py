"""Deterministic kinematic tabletop simulator.

The robot is a free-floating end-effector point with a binary gripper. Motion
is first-order (position += clamped delta), grasping is a distance rule, and
released objects snap down onto the highest surface under them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from hybrid_manip.env.types import (
    EE_INFLATE,
    GRASP_OFFSET,
    GRASP_TOL,
    MAX_STEP,
    TABLE_Z,
    Action,
    Color,
    EeNear,
    Grip,
    Gripper,
    Holding,
    NotHolding,
    ObjectOn,
    ObjectSpec,
    RobotState,
    ScenarioSpec,
    Shape,
    Sorted,
    StepInfo,
    WorldState,
    as_pose,
)
from hybrid_manip.errors import EpisodeFinished, InvalidScenario


@dataclass(frozen=True)
class RewardWeights:
    distance: float = 1.0  # per meter of progress toward the current target
    time: float = 0.01
    collision: float = 1.0
    grasp_bonus: float = 1.0
    goal_bonus: float = 10.0


# World summary --------------------------------------------------------------


@dataclass
class ObjectSummary:
    id: str
    shape: str
    color: str
    half_extent: float
    pose: tuple[float, float, float]
    graspable: bool
    held: bool = False

    def top_center(self) -> np.ndarray:
        return np.array([self.pose[0], self.pose[1], self.pose[2] + self.half_extent])


@dataclass
class WorldSummary:
    """Serializable snapshot of the scene handed to planners and monitors."""

    objects: list[ObjectSummary]
    ee_pose: tuple[float, float, float]
    gripper: str
    held: str | None
    step: int = 0
    locations: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def find(self, object_id: str) -> ObjectSummary | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def to_dict(self) -> dict:
        return {
            "robot": {"ee_pose": list(self.ee_pose), "gripper": self.gripper, "held": self.held},
            "objects": [
                {
                    "id": o.id,
                    "shape": o.shape,
                    "color": o.color,
                    "half_extent": o.half_extent,
                    "pose": list(o.pose),
                    "graspable": o.graspable,
                    "held": o.held,
                }
                for o in self.objects
            ],
            "locations": {k: list(v) for k, v in sorted(self.locations.items())},
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldSummary":
        robot = data["robot"]
        return cls(
            objects=[
                ObjectSummary(
                    id=o["id"],
                    shape=o["shape"],
                    color=o["color"],
                    half_extent=float(o["half_extent"]),
                    pose=tuple(float(v) for v in o["pose"]),
                    graspable=bool(o["graspable"]),
                    held=bool(o.get("held", False)),
                )
                for o in data["objects"]
            ],
            ee_pose=tuple(float(v) for v in robot["ee_pose"]),
            gripper=robot["gripper"],
            held=robot.get("held"),
            step=int(data.get("step", 0)),
            locations={k: tuple(float(x) for x in v) for k, v in data.get("locations", {}).items()},
        )

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "WorldSummary":
        return cls.from_dict(json.loads(text))


# Geometry helpers ------------------------------------------------------------


def ee_overlaps(ee: np.ndarray, obstacle: ObjectSpec) -> bool:
    reach = EE_INFLATE + obstacle.half_extent
    return bool(np.all(np.abs(ee - obstacle.pose) < reach))


def object_on(obj_pose, obj_half: float, platform: ObjectSpec | ObjectSummary, tol: float) -> bool:
    """True when an object rests centered (within tol) on top of a platform."""
    ppose = np.asarray(platform.pose, float)
    pose = np.asarray(obj_pose, float)
    xy_err = float(np.hypot(pose[0] - ppose[0], pose[1] - ppose[1]))
    z_err = abs(pose[2] - (ppose[2] + platform.half_extent + obj_half))
    return bool(xy_err <= tol and z_err <= tol)


def resting_z(xy, half_extent: float, others: list[ObjectSpec]) -> float:
    """Center height of an object of the given half-size dropped at xy."""
    surface = TABLE_Z
    for other in others:
        if other.footprint_contains(xy):
            surface = max(surface, other.top_z)
    return surface + half_extent


# Environment ---------------------------------------------------------------------


class Env:
    """Single-owner mutable simulator instance.

    All randomness comes from ``self.rng``; with ``init_noise == 0`` the
    initial world is exactly the scenario's.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        seed: int = 0,
        init_noise: float = 0.0,
        reward_weights: RewardWeights = RewardWeights(),
    ):
        scenario.validate()
        self.scenario = scenario.copy()
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.weights = reward_weights
        self.bounds = self.scenario.bounds
        self._initial = self._initial_world(float(init_noise))
        self._target_override: np.ndarray | None = None
        self.state: WorldState = self._initial.copy()
        self.done = False

    # construction ---------------------------------------------------------

    def _initial_world(self, init_noise: float) -> WorldState:
        ee = as_pose(self.scenario.ee_start)
        objects = [o.copy() for o in self.scenario.objects]
        if init_noise > 0:
            ee = self.bounds.clamp(ee + self.rng.uniform(-init_noise, init_noise, size=3) * np.array([1.0, 1.0, 0.0]))
            for obj in objects:
                if obj.graspable:
                    jitter = self.rng.uniform(-init_noise, init_noise, size=2)
                    obj.pose[:2] = np.clip(obj.pose[:2] + jitter, self.bounds.low[:2], self.bounds.high[:2])
        return WorldState(RobotState(ee.copy(), Gripper.OPEN, None), objects, 0, False)

    # gym-style API --------------------------------------------------------------

    @property
    def observation_dim(self) -> int:
        return 5 + 3 * len(self.state.objects) + 3

    @property
    def sim_dt(self) -> float:
        return self.scenario.sim_dt

    @property
    def step_count(self) -> int:
        return self.state.step_count

    def reset(self) -> np.ndarray:
        self.state = self._initial.copy()
        self.done = False
        return self.observation()

    def step(self, action: Action) -> tuple[np.ndarray, float, bool, StepInfo]:
        if self.done:
            raise EpisodeFinished("step() called after the episode finished; call reset()")
        if not isinstance(action, Action):
            action = Action(*action)
        delta = np.clip(action.delta, -MAX_STEP, MAX_STEP)
        if not np.all(np.isfinite(delta)):
            raise ValueError(f"non-finite action delta {action.delta.tolist()}")

        target = self.current_target()
        dist_before = float(np.linalg.norm(self.state.robot.ee_pose - target))

        collided = self._move(delta)
        grasped, released = self._apply_grip(action.grip)
        fired = self._apply_perturbations()
        self.state.step_count += 1
        self.state.collided = collided

        goal = bool(self.check_goal())
        dist_after = float(np.linalg.norm(self.state.robot.ee_pose - target))
        w = self.weights
        reward = (
            -w.distance * (dist_after - dist_before)
            - w.time
            - w.collision * float(collided)
            + w.grasp_bonus * float(grasped is not None)
            + w.goal_bonus * float(goal)
        )
        self.done = goal or self.state.step_count >= self.scenario.max_steps
        info = StepInfo(collision=collided, goal_satisfied=goal, fired_perturbations=fired, grasped=grasped, released=released)
        return self.observation(), float(reward), self.done, info

    # dynamics -------------------------------------------------------------

    def _obstacles(self) -> list[ObjectSpec]:
        return [o for o in self.state.objects if o.shape is Shape.OBSTACLE]

    def _move(self, delta: np.ndarray) -> bool:
        robot = self.state.robot
        obstacles = self._obstacles()
        ee = robot.ee_pose.copy()
        collided = False
        for axis in range(3):
            if delta[axis] == 0.0:
                continue
            trial = ee.copy()
            trial[axis] = np.clip(ee[axis] + delta[axis], self.bounds.low[axis], self.bounds.high[axis])
            hit = any(ee_overlaps(trial, ob) for ob in obstacles)
            was_inside = any(ee_overlaps(ee, ob) for ob in obstacles)
            if hit and not was_inside:
                collided = True
                continue
            ee = trial
        if any(ee_overlaps(ee, ob) for ob in obstacles):
            collided = True
        robot.ee_pose = ee
        if robot.held is not None:
            self._object(robot.held).pose = ee + GRASP_OFFSET
        return collided

    def _apply_grip(self, grip: Grip) -> tuple[str | None, str | None]:
        robot = self.state.robot
        grasped = released = None
        if grip is Grip.CLOSE:
            robot.gripper = Gripper.CLOSED
            if robot.held is None:
                best, best_d = None, GRASP_TOL
                for obj in self.state.objects:
                    if not obj.graspable:
                        continue
                    d = float(np.linalg.norm(obj.pose - robot.ee_pose))
                    if d <= best_d and (best is None or d < best_d):
                        best, best_d = obj, d
                if best is not None:
                    robot.held = best.id
                    best.pose = robot.ee_pose + GRASP_OFFSET
                    grasped = best.id
        elif grip is Grip.OPEN:
            robot.gripper = Gripper.OPEN
            if robot.held is not None:
                released = robot.held
                self._drop(self._object(robot.held))
                robot.held = None
        return grasped, released

    def _drop(self, obj: ObjectSpec) -> None:
        others = [o for o in self.state.objects if o.id != obj.id]
        obj.pose[2] = resting_z(obj.pose[:2], obj.half_extent, others)
        obj.pose[:] = self.bounds.clamp(obj.pose)

    def _apply_perturbations(self) -> list[str]:
        fired = []
        for p in self.scenario.perturbations:
            if p.at_step != self.state.step_count:
                continue
            if self.state.robot.held == p.object_id:
                self.state.robot.held = None
            self._object(p.object_id).pose = as_pose(p.new_pose)
            fired.append(p.object_id)
        return fired

    def _object(self, object_id: str) -> ObjectSpec:
        for obj in self.state.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    # goal & target -----------------------------------------------------------

    def object_pose(self, object_id: str) -> np.ndarray:
        return self._object(object_id).pose.copy()

    def set_target(self, target) -> None:
        """Override the reward/observation target (None restores the goal-derived one)."""
        self._target_override = None if target is None else as_pose(target)

    def current_target(self) -> np.ndarray:
        if self._target_override is not None:
            return self._target_override.copy()
        return self._goal_target()

    def _goal_target(self) -> np.ndarray:
        g = self.scenario.goal
        robot = self.state.robot
        if isinstance(g, EeNear):
            return as_pose(g.target)
        if isinstance(g, ObjectOn):
            if robot.held == g.object:
                return self._object(g.platform).top_center()
            return self.object_pose(g.object)
        if isinstance(g, Holding):
            return self.object_pose(g.object)
        if isinstance(g, Sorted):
            for obj in sorted(self.state.objects, key=lambda o: o.id):
                pid = g.platform_for(obj.color.value) if obj.graspable else None
                if pid is None:
                    continue
                platform = self._object(pid)
                if robot.held == obj.id:
                    return platform.top_center()
                if not object_on(obj.pose, obj.half_extent, platform, g.tol):
                    return obj.pose.copy()
        return robot.ee_pose.copy()

    def check_goal(self) -> bool:
        g = self.scenario.goal
        robot = self.state.robot
        if isinstance(g, EeNear):
            return bool(np.linalg.norm(robot.ee_pose - as_pose(g.target)) <= g.tol)
        if isinstance(g, ObjectOn):
            obj = self._object(g.object)
            return robot.held != g.object and object_on(obj.pose, obj.half_extent, self._object(g.platform), g.tol)
        if isinstance(g, Holding):
            return robot.held == g.object
        if isinstance(g, NotHolding):
            return robot.held is None
        if isinstance(g, Sorted):
            for obj in self.state.objects:
                pid = g.platform_for(obj.color.value) if obj.graspable else None
                if pid is None:
                    continue
                if robot.held == obj.id or not object_on(obj.pose, obj.half_extent, self._object(pid), g.tol):
                    return False
            return True
        raise TypeError(f"unknown goal {g!r}")

    # views -----------------------------------------------------------------

    def observation(self) -> np.ndarray:
        robot = self.state.robot
        ee = robot.ee_pose
        parts = [
            ee,
            [1.0 if robot.gripper is Gripper.CLOSED else 0.0, 1.0 if robot.held is not None else 0.0],
        ]
        parts.extend(o.pose - ee for o in self.state.objects)
        parts.append(self.current_target() - ee)
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def locations(self) -> dict[str, tuple[float, float, float]]:
        c = self.bounds.center
        start = as_pose(self.scenario.ee_start)
        return {"home": tuple(float(v) for v in start), "center": (float(c[0]), float(c[1]), float(start[2]))}

    def world_summary(self) -> WorldSummary:
        robot = self.state.robot
        return WorldSummary(
            objects=[
                ObjectSummary(
                    id=o.id,
                    shape=o.shape.value,
                    color=o.color.value,
                    half_extent=o.half_extent,
                    pose=tuple(float(v) for v in o.pose),
                    graspable=o.graspable,
                    held=robot.held == o.id,
                )
                for o in self.state.objects
            ],
            ee_pose=tuple(float(v) for v in robot.ee_pose),
            gripper=robot.gripper.value,
            held=robot.held,
            step=self.state.step_count,
            locations=self.locations(),
        )

    def render_text(self) -> str:
        """One-line-per-entity textual scene dump."""
        s = self.state
        lines = [f"step {s.step_count}  ee={np.round(s.robot.ee_pose, 4).tolist()}  gripper={s.robot.gripper.value}  held={s.robot.held}"]
        for o in s.objects:
            lines.append(f"  {o.id:<16} {o.color.value:<6} {o.shape.value:<8} {np.round(o.pose, 4).tolist()}")
        return "\n".join(lines)


# Functional surface ---------------------------------------------------------------


def create_env(scenario: ScenarioSpec, seed: int = 0, **kwargs) -> Env:
    return Env(scenario, seed, **kwargs)


def reset(env: Env) -> np.ndarray:
    return env.reset()


def step(env: Env, action: Action):
    return env.step(action)


def check_goal(env: Env) -> bool:
    return env.check_goal()


def world_summary(env: Env) -> WorldSummary:
    return env.world_summary()


__all__ = [
    "Color",
    "Env",
    "InvalidScenario",
    "ObjectSummary",
    "RewardWeights",
    "WorldSummary",
    "check_goal",
    "create_env",
    "object_on",
    "reset",
    "step",
    "world_summary",
]
