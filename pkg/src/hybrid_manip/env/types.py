"""Scenario and world data types for the kinematic tabletop."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from hybrid_manip.errors import InvalidScenario

# Per-component action clamp, meters per step.
MAX_STEP = 0.05
# Grasp attaches an object whose center lies within this distance of the end-effector.
GRASP_TOL = 0.03
# The end-effector is a point inflated into a cube of this half-size for obstacle checks.
EE_INFLATE = 0.01
GRASP_OFFSET = np.zeros(3)
TABLE_Z = 0.0
DEFAULT_SIM_DT = 0.1


class Shape(str, Enum):
    CUBE = "cube"
    SPHERE = "sphere"
    PLATFORM = "platform"
    OBSTACLE = "obstacle"


class Color(str, Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    YELLOW = "yellow"


class Gripper(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class Grip(str, Enum):
    OPEN = "open"
    CLOSE = "close"
    HOLD = "hold"


def as_pose(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"pose must have 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"pose has non-finite components: {arr.tolist()}")
    return arr


@dataclass(frozen=True)
class WorkspaceBounds:
    low: tuple[float, float, float]
    high: tuple[float, float, float]

    def __post_init__(self):
        lo, hi = np.asarray(self.low, float), np.asarray(self.high, float)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise InvalidScenario(f"workspace bounds need low < high componentwise, got {self.low} / {self.high}")

    def contains(self, pose, eps: float = 1e-12) -> bool:
        p = np.asarray(pose, float)
        return bool(np.all(p >= np.asarray(self.low) - eps) and np.all(p <= np.asarray(self.high) + eps))

    def clamp(self, pose) -> np.ndarray:
        return np.clip(pose, self.low, self.high)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.low) + np.asarray(self.high)) / 2.0


@dataclass
class ObjectSpec:
    id: str
    shape: Shape
    color: Color
    half_extent: float
    pose: np.ndarray
    graspable: bool = False

    def __post_init__(self):
        self.shape = Shape(self.shape)
        self.color = Color(self.color)
        self.half_extent = float(self.half_extent)
        self.pose = as_pose(self.pose)
        self.graspable = bool(self.graspable)

    @property
    def top_z(self) -> float:
        return float(self.pose[2] + self.half_extent)

    def top_center(self) -> np.ndarray:
        return np.array([self.pose[0], self.pose[1], self.top_z])

    def footprint_contains(self, xy) -> bool:
        return bool(abs(xy[0] - self.pose[0]) <= self.half_extent and abs(xy[1] - self.pose[1]) <= self.half_extent)

    def copy(self) -> "ObjectSpec":
        return ObjectSpec(self.id, self.shape, self.color, self.half_extent, self.pose.copy(), self.graspable)


# Goal predicates -----------------------------------------------------------


@dataclass(frozen=True)
class EeNear:
    target: tuple[float, float, float]
    tol: float = 0.02


@dataclass(frozen=True)
class ObjectOn:
    object: str
    platform: str
    tol: float = 0.02


@dataclass(frozen=True)
class Holding:
    object: str


@dataclass(frozen=True)
class NotHolding:
    pass


@dataclass(frozen=True)
class Sorted:
    mapping: tuple[tuple[str, str], ...]  # (color, platform id) pairs
    tol: float = 0.02

    def platform_for(self, color: str) -> str | None:
        for c, p in self.mapping:
            if c == color:
                return p
        return None


GoalPredicate = Union[EeNear, ObjectOn, Holding, NotHolding, Sorted]


@dataclass(frozen=True)
class Perturbation:
    at_step: int
    object_id: str
    new_pose: tuple[float, float, float]


@dataclass
class ScenarioSpec:
    name: str
    bounds: WorkspaceBounds
    objects: list[ObjectSpec]
    goal: GoalPredicate
    max_steps: int
    perturbations: list[Perturbation] = field(default_factory=list)
    sim_dt: float = DEFAULT_SIM_DT
    ee_start: tuple[float, float, float] = (0.0, 0.0, 0.3)
    instruction: str = ""

    def object(self, object_id: str) -> ObjectSpec:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def copy(self) -> "ScenarioSpec":
        return copy.deepcopy(self)

    def validate(self) -> None:
        """Raise InvalidScenario if any structural invariant is broken."""
        ids = [o.id for o in self.objects]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise InvalidScenario(f"duplicate object ids: {dupes}")
        if self.max_steps <= 0:
            raise InvalidScenario("max_steps must be positive")
        if not self.sim_dt > 0:
            raise InvalidScenario("sim_dt must be positive")
        try:
            start = as_pose(self.ee_start)
        except ValueError as exc:
            raise InvalidScenario(str(exc)) from None
        if not self.bounds.contains(start):
            raise InvalidScenario(f"ee_start {list(start)} outside workspace")
        for obj in self.objects:
            if obj.half_extent <= 0:
                raise InvalidScenario(f"object {obj.id!r}: half_extent must be > 0")
            if obj.graspable and obj.shape in (Shape.PLATFORM, Shape.OBSTACLE):
                raise InvalidScenario(f"object {obj.id!r}: {obj.shape.value}s are never graspable")
            if not self.bounds.contains(obj.pose):
                raise InvalidScenario(f"object {obj.id!r} pose {obj.pose.tolist()} outside workspace")
        for p in self.perturbations:
            if p.object_id not in ids:
                raise InvalidScenario(f"perturbation references missing object {p.object_id!r}")
            if not 0 <= p.at_step < self.max_steps:
                raise InvalidScenario(f"perturbation step {p.at_step} not in [0, {self.max_steps})")
            try:
                pose = as_pose(p.new_pose)
            except ValueError as exc:
                raise InvalidScenario(str(exc)) from None
            if not self.bounds.contains(pose):
                raise InvalidScenario(f"perturbation pose {list(p.new_pose)} outside workspace")
        self._validate_goal(ids)

    def _validate_goal(self, ids: list[str]) -> None:
        g = self.goal
        refs: list[str] = []
        if isinstance(g, EeNear):
            tol = g.tol
            if not self.bounds.contains(as_pose(g.target)):
                raise InvalidScenario("ee_near target outside workspace")
        elif isinstance(g, ObjectOn):
            tol, refs = g.tol, [g.object, g.platform]
        elif isinstance(g, Holding):
            tol, refs = 1.0, [g.object]
        elif isinstance(g, NotHolding):
            tol = 1.0
        elif isinstance(g, Sorted):
            tol, refs = g.tol, [p for _, p in g.mapping]
        else:
            raise InvalidScenario(f"unknown goal type {type(g).__name__}")
        if tol <= 0:
            raise InvalidScenario("goal tolerance must be > 0")
        missing = [r for r in refs if r not in ids]
        if missing:
            raise InvalidScenario(f"goal references missing objects {missing}")


@dataclass
class Action:
    delta: np.ndarray
    grip: Grip = Grip.HOLD

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64).reshape(3)
        self.grip = Grip(self.grip)


@dataclass
class RobotState:
    ee_pose: np.ndarray
    gripper: Gripper = Gripper.OPEN
    held: str | None = None


@dataclass
class WorldState:
    robot: RobotState
    objects: list[ObjectSpec]
    step_count: int = 0
    collided: bool = False

    def copy(self) -> "WorldState":
        return WorldState(
            RobotState(self.robot.ee_pose.copy(), self.robot.gripper, self.robot.held),
            [o.copy() for o in self.objects],
            self.step_count,
            self.collided,
        )


@dataclass
class StepInfo:
    collision: bool
    goal_satisfied: bool
    fired_perturbations: list[str]
    grasped: str | None = None
    released: str | None = None
