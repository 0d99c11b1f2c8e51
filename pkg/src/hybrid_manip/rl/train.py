"""Episode-driven training loops for PPO and SAC, and per-skill checkpoints."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from hybrid_manip.rl.buffers import ReplayBuffer, RolloutBuffer
from hybrid_manip.rl.checkpoint import PolicyCheckpoint
from hybrid_manip.rl.mlp import gaussian_log_prob, predict
from hybrid_manip.rl.ppo import PpoAgent, PpoConfig, ppo_update
from hybrid_manip.rl.sac import SacAgent, SacConfig, policy_sample, sac_update
from hybrid_manip.rl.skills import FLAT, SKILLS, FlatEnv, SkillEnv

log = logging.getLogger(__name__)

ALGOS = ("ppo", "sac")
WINDOW = 10

# A 2048-step horizon yields at most one update in a 100-episode skill run,
# so skill training defaults to a shorter one.
SKILL_PPO = PpoConfig(horizon=256, minibatch=64, epochs=10)
# Shaped rewards are a few hundredths per step; scale them up against the entropy bonus.
SKILL_SAC = SacConfig(reward_scale=20.0)


class EpisodicEnv(Protocol):
    obs_dim: int
    act_dim: int

    def reset(self) -> np.ndarray: ...

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]: ...


@dataclass
class EpisodeRecord:
    episode: int
    cumulative_reward: float
    success: bool
    steps: int


@dataclass
class LearningCurve:
    records: list[EpisodeRecord] = field(default_factory=list)

    def append(self, cumulative_reward: float, success: bool, steps: int) -> None:
        self.records.append(EpisodeRecord(len(self.records), float(cumulative_reward), bool(success), int(steps)))

    def __len__(self) -> int:
        return len(self.records)

    def rewards(self) -> np.ndarray:
        return np.array([r.cumulative_reward for r in self.records])

    def window_mean(self, start: int, stop: int) -> float:
        return float(np.mean(self.rewards()[start:stop]))

    def trailing_means(self, window: int = WINDOW) -> list[float]:
        r = self.rewards()
        return [float(np.mean(r[max(0, i - window + 1) : i + 1])) for i in range(len(r))]

    def to_csv(self, window: int = WINDOW) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["episode", "cumulative_reward", "success", "steps", f"trailing{window}_mean"])
        for rec, wm in zip(self.records, self.trailing_means(window)):
            writer.writerow([rec.episode, repr(rec.cumulative_reward), int(rec.success), rec.steps, repr(wm)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        curve = cls()
        for row in rows:
            curve.append(float(row["cumulative_reward"]), row["success"] == "1", int(row["steps"]))
        return curve


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# PPO ----------------------------------------------------------------------------


def _scale(env) -> float:
    return float(getattr(env, "obs_scale", 1.0))


def run_ppo(env: EpisodicEnv, episodes: int, rng: np.random.Generator, config: PpoConfig, agent: PpoAgent | None = None):
    agent = agent or PpoAgent.create(env.obs_dim, env.act_dim, rng, config)
    scale = _scale(env)
    buffer = RolloutBuffer(config.horizon, env.obs_dim, env.act_dim)
    curve = LearningCurve()
    updates = []
    for _ in range(episodes):
        obs = env.reset() * scale
        total, steps, done, info = 0.0, 0, False, {"success": False}
        while not done:
            mean = predict(agent.policy.mean_net, obs)
            action = mean + np.exp(agent.policy.log_std) * rng.standard_normal(mean.shape[0])
            log_prob = gaussian_log_prob(action, mean, agent.policy.log_std)
            value = float(predict(agent.value, obs)[0])
            next_obs, reward, done, info = env.step(action)
            next_obs = next_obs * scale
            buffer.add(obs, action, reward, done, log_prob, value)
            total += reward
            steps += 1
            obs = next_obs
            if buffer.full:
                boot = 0.0 if done else float(predict(agent.value, obs)[0])
                updates.append(ppo_update(agent, buffer, config, rng, boot))
        curve.append(total, info.get("success", False), steps)
    return agent, curve, updates


def ppo_checkpoint(agent: PpoAgent, skill: str, seed: int, obs_scale: float = 1.0) -> PolicyCheckpoint:
    return PolicyCheckpoint(
        algo="ppo",
        skill=skill,
        obs_dim=agent.policy.mean_net.n_in,
        action_dim=agent.policy.action_dim,
        seed=seed,
        nets={"policy": agent.policy.mean_net.copy(), "value": agent.value.copy()},
        vectors={"log_std": agent.policy.log_std.copy(), "obs_scale": np.array([obs_scale])},
    )


# SAC ---------------------------------------------------------------------------


def run_sac(env: EpisodicEnv, episodes: int, rng: np.random.Generator, config: SacConfig, agent: SacAgent | None = None):
    agent = agent or SacAgent.create(env.obs_dim, env.act_dim, rng, config)
    scale = _scale(env)
    replay = ReplayBuffer(config.capacity, env.obs_dim, env.act_dim, rng)
    curve = LearningCurve()
    updates = []
    for _ in range(episodes):
        obs = env.reset() * scale
        total, steps, done, info = 0.0, 0, False, {"success": False}
        while not done:
            if replay.inserted < config.warmup:
                action = rng.uniform(-1.0, 1.0, size=env.act_dim)
            else:
                action, _ = policy_sample(agent, obs, rng)
            next_obs, reward, done, info = env.step(action)
            next_obs = next_obs * scale
            # time-limit endings bootstrap; only goal termination is terminal
            replay.add(obs, action, config.reward_scale * reward, next_obs, bool(info.get("success", False)))
            total += reward
            steps += 1
            obs = next_obs
            if replay.inserted >= config.warmup and len(replay) >= config.batch:
                for _ in range(config.updates_per_step):
                    updates.append(sac_update(agent, replay.sample(config.batch), config, rng))
        curve.append(total, info.get("success", False), steps)
    return agent, curve, updates


def sac_checkpoint(agent: SacAgent, skill: str, seed: int, obs_scale: float = 1.0) -> PolicyCheckpoint:
    return PolicyCheckpoint(
        algo="sac",
        skill=skill,
        obs_dim=agent.policy.n_in,
        action_dim=agent.act_dim,
        seed=seed,
        nets={
            "policy": agent.policy.copy(),
            "q1": agent.q1.copy(),
            "q2": agent.q2.copy(),
            "q1_target": agent.q1_target.copy(),
            "q2_target": agent.q2_target.copy(),
        },
        vectors={"log_alpha": agent.log_alpha.copy(), "obs_scale": np.array([obs_scale])},
    )


# Entry points ----------------------------------------------------------------------


def train_policy(
    env: EpisodicEnv,
    name: str,
    algo: str,
    episodes: int,
    seed: int,
    config: PpoConfig | SacConfig | None = None,
) -> tuple[PolicyCheckpoint, LearningCurve]:
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")
    rng = np.random.default_rng(_child_seeds(seed, 2)[1])
    if algo == "ppo":
        cfg = config if isinstance(config, PpoConfig) else SKILL_PPO
        agent, curve, _ = run_ppo(env, episodes, rng, cfg)
        ckpt = ppo_checkpoint(agent, name, seed, _scale(env))
    else:
        cfg = config if isinstance(config, SacConfig) else SKILL_SAC
        agent, curve, _ = run_sac(env, episodes, rng, cfg)
        ckpt = sac_checkpoint(agent, name, seed, _scale(env))
    if len(curve) >= 2 * WINDOW:
        log.info(
            "%s/%s: first-%d mean %.3f, last-%d mean %.3f",
            name, algo, WINDOW, curve.window_mean(0, WINDOW), WINDOW, curve.window_mean(-WINDOW, None),
        )
    return ckpt, curve


def train_skill(
    env_factory: Callable[[int], EpisodicEnv] | None,
    skill: str,
    algo: str,
    episodes: int,
    seed: int,
    config: PpoConfig | SacConfig | None = None,
) -> tuple[PolicyCheckpoint, LearningCurve]:
    """Train one goal-conditioned skill policy; ``env_factory(seed)`` defaults to SkillEnv."""
    if skill not in SKILLS:
        raise ValueError(f"unknown skill {skill!r}; valid skills: {', '.join(SKILLS)}")
    factory = env_factory or (lambda s: SkillEnv(skill, s))
    env = factory(_child_seeds(seed, 2)[0])
    return train_policy(env, skill, algo, episodes, seed, config)


def train_flat(scenario, episodes: int, seed: int, config: PpoConfig | None = None, init_noise: float = 0.03):
    """Train the whole-task RL-only baseline policy with PPO."""
    env = FlatEnv(scenario, seed=_child_seeds(seed, 2)[0], init_noise=init_noise)
    return train_policy(env, FLAT, "ppo", episodes, seed, config)
