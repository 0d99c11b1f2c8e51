"""Goal-conditioned skills: observation layout, action mapping, and training environments.

Every skill policy sees the same 12-dimensional vector::

    [0:3]  end-effector position
    [3]    gripper closed flag
    [4]    holding flag
    [5:8]  obstacle center - end-effector (zeros when no obstacle)
    [8]    obstacle half-extent (0 when none)
    [9:12] target - end-effector

Policies emit normalized motion in [-1, 1]^3, scaled by MAX_STEP. The
gripper command is not learned: each skill closes or opens when its
predicted post-move distance to the target falls inside a trigger radius.
The flat RL-only policy is the exception: it reads the full environment
observation and emits a fourth, learned grip channel.
"""

from __future__ import annotations

import numpy as np

from hybrid_manip.env.sim import Env
from hybrid_manip.env.types import (
    GRASP_TOL,
    MAX_STEP,
    Action,
    EeNear,
    Grip,
    Holding,
    ObjectOn,
    ObjectSpec,
    ScenarioSpec,
    Shape,
    WorkspaceBounds,
)
from hybrid_manip.errors import DimensionMismatch
from hybrid_manip.rl.checkpoint import PolicyCheckpoint
from hybrid_manip.rl.mlp import LOG_STD_MAX, LOG_STD_MIN, predict
from hybrid_manip.rl.sac import split_head

SKILLS = ("reach", "grasp", "place", "avoid_reach")
FLAT = "flat"
SKILL_OBS_DIM = 12
SKILL_ACT_DIM = 3
FLAT_ACT_DIM = 4

EE_SLOT = slice(0, 3)
GRIPPER_SLOT = 3
HELD_SLOT = 4
OBSTACLE_SLOT = slice(5, 8)
OBSTACLE_HALF_SLOT = 8
TARGET_SLOT = slice(9, 12)

GRASP_TRIGGER = 0.02
PLACE_TRIGGER = 0.01
FLAT_GRIP_THRESHOLD = 0.5
# Fixed network input scale for meter-valued observations.
OBS_SCALE = 10.0

TRAIN_BOUNDS = WorkspaceBounds((-0.4, -0.4, 0.0), (0.4, 0.4, 0.4))


def skill_observation(env: Env, target, obstacle: ObjectSpec | None = None) -> np.ndarray:
    robot = env.state.robot
    ee = robot.ee_pose
    obs = np.zeros(SKILL_OBS_DIM)
    obs[EE_SLOT] = ee
    obs[GRIPPER_SLOT] = 1.0 if robot.gripper.value == "closed" else 0.0
    obs[HELD_SLOT] = 1.0 if robot.held is not None else 0.0
    if obstacle is not None:
        obs[OBSTACLE_SLOT] = obstacle.pose - ee
        obs[OBSTACLE_HALF_SLOT] = obstacle.half_extent
    obs[TARGET_SLOT] = np.asarray(target, dtype=np.float64) - ee
    return obs


def to_env_action(skill: str, action, obs) -> Action:
    """Map a normalized policy output to a clamped simulator Action."""
    a = np.asarray(action, dtype=np.float64)
    delta = MAX_STEP * np.clip(a[:3], -1.0, 1.0)
    if skill == FLAT:
        g = a[3]
        grip = Grip.CLOSE if g > FLAT_GRIP_THRESHOLD else Grip.OPEN if g < -FLAT_GRIP_THRESHOLD else Grip.HOLD
        return Action(delta, grip)
    predicted = float(np.linalg.norm(np.asarray(obs)[TARGET_SLOT] - delta))
    grip = Grip.HOLD
    if skill == "grasp" and obs[HELD_SLOT] < 0.5 and predicted <= GRASP_TRIGGER:
        grip = Grip.CLOSE
    elif skill == "place" and obs[HELD_SLOT] > 0.5 and predicted <= PLACE_TRIGGER:
        grip = Grip.OPEN
    return Action(delta, grip)


def policy_action(ckpt: PolicyCheckpoint, obs, deterministic: bool = True, rng: np.random.Generator | None = None) -> np.ndarray:
    """Normalized action from a checkpoint (tanh-squashed for SAC)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (ckpt.obs_dim,):
        raise DimensionMismatch(f"observation has {obs.shape[0]} entries, checkpoint expects {ckpt.obs_dim}")
    if not deterministic and rng is None:
        raise ValueError("stochastic actions need an rng")
    scale = ckpt.vectors.get("obs_scale")
    out = predict(ckpt.nets["policy"], obs * scale[0] if scale is not None else obs)
    if ckpt.algo == "ppo":
        if deterministic:
            return out
        log_std = np.clip(ckpt.vectors["log_std"], LOG_STD_MIN, LOG_STD_MAX)
        return out + np.exp(log_std) * rng.standard_normal(out.shape[0])
    if ckpt.algo == "sac":
        mean, log_std, _ = split_head(out, ckpt.action_dim)
        if deterministic:
            return np.tanh(mean)
        return np.tanh(mean + np.exp(log_std) * rng.standard_normal(mean.shape[0]))
    raise ValueError(f"unknown algo {ckpt.algo!r}")


def act(ckpt: PolicyCheckpoint, obs, deterministic: bool = True, rng: np.random.Generator | None = None) -> Action:
    return to_env_action(ckpt.skill, policy_action(ckpt, obs, deterministic, rng), obs)


# Training environments ------------------------------------------------------


def _uniform(rng, low, high):
    return rng.uniform(low, high)


class SkillEnv:
    """Randomized single-skill episodes for goal-conditioned training.

    ``step`` takes the normalized policy output; success is the underlying
    scenario goal (EeNear for reaching, Holding for grasp, ObjectOn for place).
    """

    obs_dim = SKILL_OBS_DIM
    act_dim = SKILL_ACT_DIM
    obs_scale = OBS_SCALE

    def __init__(self, skill: str, seed: int = 0, max_steps: int | None = None):
        if skill not in SKILLS:
            raise ValueError(f"unknown skill {skill!r}; valid skills: {', '.join(SKILLS)}")
        self.skill = skill
        self.rng = np.random.default_rng(seed)
        self.max_steps = max_steps or (60 if skill == "avoid_reach" else 40)
        self.env: Env | None = None
        self.obstacle: ObjectSpec | None = None
        self.target: np.ndarray | None = None

    def _scenario(self) -> ScenarioSpec:
        rng = self.rng
        xy = (-0.3, 0.3)
        ee = np.array([_uniform(rng, *xy), _uniform(rng, *xy), _uniform(rng, 0.05, 0.35)])
        objects: list[ObjectSpec] = []
        if self.skill == "reach":
            target = np.array([_uniform(rng, *xy), _uniform(rng, *xy), _uniform(rng, 0.02, 0.35)])
            goal = EeNear(tuple(target), 0.02)
        elif self.skill == "grasp":
            cube = np.array([_uniform(rng, *xy), _uniform(rng, *xy), 0.02])
            objects.append(ObjectSpec("cube", Shape.CUBE, "red", 0.02, cube, True))
            goal = Holding("cube")
        elif self.skill == "place":
            plat = np.array([_uniform(rng, *xy), _uniform(rng, *xy), 0.04])
            objects.append(ObjectSpec("cube", Shape.CUBE, "red", 0.02, ee.copy(), True))
            objects.append(ObjectSpec("platform", Shape.PLATFORM, "blue", 0.04, plat, False))
            goal = ObjectOn("cube", "platform", 0.02)
        else:  # avoid_reach: start and target on opposite sides of a central obstacle
            side = rng.choice([-1.0, 1.0])
            wall = np.array([_uniform(rng, -0.05, 0.05), _uniform(rng, -0.1, 0.1), 0.06])
            objects.append(ObjectSpec("wall", Shape.OBSTACLE, "yellow", 0.06, wall, False))
            ee = np.array([side * _uniform(rng, 0.15, 0.3), _uniform(rng, -0.15, 0.15), _uniform(rng, 0.02, 0.1)])
            target = np.array([-side * _uniform(rng, 0.15, 0.3), _uniform(rng, -0.15, 0.15), _uniform(rng, 0.02, 0.1)])
            goal = EeNear(tuple(target), 0.02)
        extra = 1 if self.skill == "place" else 0
        return ScenarioSpec(
            name=f"train_{self.skill}",
            bounds=TRAIN_BOUNDS,
            objects=objects,
            goal=goal,
            max_steps=self.max_steps + extra,
            ee_start=tuple(ee),
        )

    def reset(self) -> np.ndarray:
        spec = self._scenario()
        self.env = Env(spec, seed=int(self.rng.integers(2**31)))
        self.env.reset()
        if self.skill == "place":
            self.env.step(Action(np.zeros(3), Grip.CLOSE))
        self.obstacle = next((o for o in self.env.state.objects if o.shape is Shape.OBSTACLE), None)
        return self.observation()

    def observation(self) -> np.ndarray:
        return skill_observation(self.env, self.env.current_target(), self.obstacle)

    def step(self, action):
        obs = self.observation()
        _, reward, done, info = self.env.step(to_env_action(self.skill, action, obs))
        return self.observation(), reward, done, {"success": info.goal_satisfied, "collision": info.collision}


class FlatEnv:
    """Whole-task environment for the RL-only baseline.

    The target slot always points at the final goal location and the policy
    controls the gripper directly.
    """

    act_dim = FLAT_ACT_DIM
    obs_scale = OBS_SCALE

    def __init__(self, scenario: ScenarioSpec, seed: int = 0, init_noise: float = 0.0, env: Env | None = None):
        self.env = env if env is not None else Env(scenario, seed, init_noise=init_noise)
        self.env.set_target(final_goal_target(self.env))
        self.obs_dim = self.env.observation_dim

    def reset(self) -> np.ndarray:
        obs = self.env.reset()
        self.env.set_target(final_goal_target(self.env))
        return self.env.observation() if obs is not None else obs

    def step(self, action):
        obs = self.env.observation()
        _, reward, done, info = self.env.step(to_env_action(FLAT, action, obs))
        return self.env.observation(), reward, done, {"success": info.goal_satisfied, "collision": info.collision}


def final_goal_target(env: Env) -> np.ndarray:
    g = env.scenario.goal
    if isinstance(g, ObjectOn):
        return env._object(g.platform).top_center()
    if isinstance(g, EeNear):
        return np.asarray(g.target, dtype=np.float64)
    if isinstance(g, Holding):
        return env.object_pose(g.object)
    return env.current_target()
