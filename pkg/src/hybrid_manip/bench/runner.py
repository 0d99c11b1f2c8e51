"""Per-condition episode batteries with seeded perturbations."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from hybrid_manip.env.sim import Env, resting_z
from hybrid_manip.env.types import Perturbation, ScenarioSpec
from hybrid_manip.errors import HybridManipError
from hybrid_manip.integration.executor import ExecutionConfig, execute_task
from hybrid_manip.integration.skills import SkillLibrary
from hybrid_manip.planner.plan import Planner, RuleBasedPlanner
from hybrid_manip.rl.checkpoint import PolicyCheckpoint
from hybrid_manip.rl.mlp import init_mlp
from hybrid_manip.rl.skills import FLAT, FLAT_ACT_DIM, OBS_SCALE, FlatEnv, policy_action
from hybrid_manip.bench.metrics import EpisodeMetrics

PERTURB_DISTANCE = 0.15
PERTURB_FRACTION = 0.3
DEFAULT_INIT_NOISE = 0.03
# keep displaced objects this far inside the workspace edge
PERTURB_EDGE_MARGIN = 0.05


class Condition(str, Enum):
    RL_ONLY = "rl_only"
    HYBRID_RULE_BASED = "hybrid_rule_based"
    HYBRID_LLM = "hybrid_llm"


@dataclass
class ConditionSpec:
    """A condition plus where its policies and plans come from.

    ``planner_factory`` is called once per episode so every episode owns its
    planner (and LLM client). ``flat_policy`` is only used by RL_ONLY, either
    one checkpoint or one per scenario name; scenarios without one get a
    random-weight policy seeded from the battery seed.
    """

    condition: Condition
    skills: SkillLibrary | None = None
    planner_factory: Callable[[], Planner] | None = None
    flat_policy: PolicyCheckpoint | dict[str, PolicyCheckpoint] | None = None
    label: str = ""

    def flat_policy_for(self, scenario: str) -> PolicyCheckpoint | None:
        if isinstance(self.flat_policy, dict):
            return self.flat_policy.get(scenario)
        return self.flat_policy

    @property
    def name(self) -> str:
        return self.condition.value

    def describe(self) -> dict:
        d = {"condition": self.name, "label": self.label}
        if self.condition is Condition.RL_ONLY:
            fp = self.flat_policy
            if isinstance(fp, dict):
                d["flat_policy"] = {k: _ckpt_digest(v) for k, v in sorted(fp.items())}
            else:
                d["flat_policy"] = None if fp is None else _ckpt_digest(fp)
        else:
            d["skills"] = self.skills.source if self.skills else None
        return d


def _ckpt_digest(ckpt: PolicyCheckpoint) -> str:
    return hashlib.sha256(ckpt.to_bytes()).hexdigest()[:16]


def rl_only(flat_policy: PolicyCheckpoint | dict[str, PolicyCheckpoint] | None = None) -> ConditionSpec:
    return ConditionSpec(Condition.RL_ONLY, flat_policy=flat_policy, label="RL Only")


def hybrid_rule_based(skills: SkillLibrary | None = None) -> ConditionSpec:
    return ConditionSpec(Condition.HYBRID_RULE_BASED, skills or SkillLibrary.oracle(), RuleBasedPlanner, label="LLM + RL (rule-based planner)")


def hybrid_llm(planner_factory: Callable[[], Planner], skills: SkillLibrary | None = None) -> ConditionSpec:
    return ConditionSpec(Condition.HYBRID_LLM, skills or SkillLibrary.oracle(), planner_factory, label="LLM + RL")


def episode_seed(seed: int, scenario_index: int, episode: int) -> int:
    """Seed shared by every condition for the same (scenario, episode) slot."""
    return int(np.random.SeedSequence([seed, scenario_index, episode]).generate_state(1)[0])


def is_perturbed(episode: int) -> bool:
    return episode % 2 == 1


def schedule_perturbation(env: Env, rng: np.random.Generator) -> Perturbation:
    """Displace one graspable object by PERTURB_DISTANCE at PERTURB_FRACTION of the episode."""
    spec = env.scenario
    movable = sorted((o for o in env.state.objects if o.graspable), key=lambda o: o.id)
    if not movable:
        raise ValueError(f"scenario {spec.name} has no graspable object to perturb")
    obj = movable[int(rng.integers(len(movable)))]
    low = np.asarray(spec.bounds.low[:2], dtype=float) + PERTURB_EDGE_MARGIN
    high = np.asarray(spec.bounds.high[:2], dtype=float) - PERTURB_EDGE_MARGIN
    theta0 = float(rng.uniform(0.0, 2.0 * math.pi))
    xy = None
    for k in range(16):  # first direction (in 16 even turns from a random start) that stays inside
        theta = theta0 + k * math.pi / 8
        cand = obj.pose[:2] + PERTURB_DISTANCE * np.array([math.cos(theta), math.sin(theta)])
        if np.all(cand >= low) and np.all(cand <= high):
            xy = cand
            break
    if xy is None:
        xy = np.clip(obj.pose[:2] + PERTURB_DISTANCE * np.array([math.cos(theta0), math.sin(theta0)]), low, high)
    others = [o for o in env.state.objects if o.id != obj.id]
    z = resting_z(xy, obj.half_extent, others)
    at = max(1, int(PERTURB_FRACTION * spec.max_steps))
    return Perturbation(at, obj.id, (float(xy[0]), float(xy[1]), float(z)))


def make_episode_env(scenario: ScenarioSpec, seed: int, perturbed: bool, init_noise: float) -> Env:
    rng = np.random.default_rng(seed)
    env_seed = int(rng.integers(2**31))
    env = Env(scenario, seed=env_seed, init_noise=init_noise)
    env.scenario.perturbations = []
    if perturbed:
        env.scenario.perturbations.append(schedule_perturbation(env, rng))
        env.scenario.validate()
    env.reset()
    return env


def random_flat_policy(env: Env, seed: int) -> PolicyCheckpoint:
    rng = np.random.default_rng(seed)
    net = init_mlp((env.observation_dim, 64, 64, FLAT_ACT_DIM), rng, out_scale=1.0)
    return PolicyCheckpoint(
        "ppo", FLAT, env.observation_dim, FLAT_ACT_DIM, seed, {"policy": net},
        {"log_std": np.zeros(FLAT_ACT_DIM), "obs_scale": np.array([OBS_SCALE])},
    )


def run_flat_episode(env: Env, policy: PolicyCheckpoint) -> tuple[bool, float]:
    """The RL-only baseline: one flat policy, no plan, no monitor."""
    flat = FlatEnv(env.scenario, env=env)
    obs = env.observation()
    total, done, success = 0.0, False, False
    while not done:
        obs, reward, done, info = flat.step(policy_action(policy, obs, deterministic=True))
        total += reward
        success = info["success"]
    return success, total


def run_episode(spec: ConditionSpec, scenario: ScenarioSpec, env: Env, cfg: ExecutionConfig, flat_policy=None):
    """Returns (success, cumulative reward, replans, error)."""
    try:
        if spec.condition is Condition.RL_ONLY:
            success, total = run_flat_episode(env, flat_policy)
            return success, total, 0, None
        result = execute_task(scenario.instruction, env, spec.planner_factory(), spec.skills, cfg)
    except HybridManipError as exc:
        partial = getattr(exc, "result", None)
        total = partial.cumulative_reward if partial else 0.0
        return False, total, partial.replans_used if partial else 0, f"{type(exc).__name__}: {exc}"
    return result.succeeded, result.cumulative_reward, result.replans_used, result.error


@dataclass
class BatteryConfig:
    n_episodes: int
    seed: int
    init_noise: float = DEFAULT_INIT_NOISE
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)

    def fingerprint(self, scenarios, conditions) -> str:
        blob = {
            "n_episodes": self.n_episodes,
            "seed": self.seed,
            "init_noise": self.init_noise,
            "execution": vars(self.execution),
            "scenarios": [s.name for s in scenarios],
            "conditions": [c.describe() for c in conditions],
        }
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:12]


def run_battery(scenarios, conditions, config: BatteryConfig) -> list[EpisodeMetrics]:
    if config.n_episodes <= 0:
        raise ValueError("n_episodes must be positive")
    rows = []
    for si, scenario in enumerate(scenarios):
        for spec in conditions:
            if spec.condition is not Condition.RL_ONLY and (spec.skills is None or spec.planner_factory is None):
                raise ValueError(f"condition {spec.name} needs skills and a planner")
            for ep in range(config.n_episodes):
                seed = episode_seed(config.seed, si, ep)
                perturbed = is_perturbed(ep)
                env = make_episode_env(scenario, seed, perturbed, config.init_noise)
                flat = None
                if spec.condition is Condition.RL_ONLY:
                    flat = spec.flat_policy_for(scenario.name) or random_flat_policy(env, config.seed)
                success, total, replans, err = run_episode(spec, scenario, env, config.execution, flat)
                steps = env.step_count
                rows.append(
                    EpisodeMetrics(
                        scenario=scenario.name,
                        condition=spec.name,
                        episode=ep,
                        seed=seed,
                        perturbed=perturbed,
                        success=bool(success),
                        steps=steps,
                        completion_time_s=steps * env.sim_dt,
                        replans=replans,
                        cumulative_reward=float(total),
                        error=err,
                    )
                )
    return rows
