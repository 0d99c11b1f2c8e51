"""Soft actor-critic: tanh-squashed Gaussian actor, twin critics with Polyak targets, tuned temperature."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hybrid_manip.errors import InsufficientReplay
from hybrid_manip.rl.mlp import (
    HIDDEN,
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    AdamState,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_mlp,
    predict,
)
from hybrid_manip.rl.ppo import UpdateStats

SQUASH_EPS = 1e-6


@dataclass
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    batch: int = 256
    capacity: int = 100_000
    alpha: float = 0.2
    auto_alpha: bool = True
    target_entropy: float | None = None  # defaults to -action_dim
    lr: float = 3e-4
    warmup: int = 256
    reward_scale: float = 1.0
    updates_per_step: int = 1

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


@dataclass
class SacAgent:
    policy: MlpParams  # obs -> [mean, log_std]
    q1: MlpParams
    q2: MlpParams
    q1_target: MlpParams
    q2_target: MlpParams
    log_alpha: np.ndarray
    policy_opt: AdamState
    q1_opt: AdamState
    q2_opt: AdamState
    alpha_opt: AdamState
    act_dim: int

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, rng: np.random.Generator, config: SacConfig = SacConfig(), hidden=HIDDEN):
        policy = init_mlp((obs_dim, *hidden, 2 * act_dim), rng, out_scale=0.01)
        q1 = init_mlp((obs_dim + act_dim, *hidden, 1), rng)
        q2 = init_mlp((obs_dim + act_dim, *hidden, 1), rng)
        log_alpha = np.array([math.log(config.alpha)]) if config.alpha > 0 else np.array([-np.inf])
        return cls(
            policy,
            q1,
            q2,
            q1.copy(),
            q2.copy(),
            log_alpha,
            AdamState.zeros_like(policy.leaves(), lr=config.lr),
            AdamState.zeros_like(q1.leaves(), lr=config.lr),
            AdamState.zeros_like(q2.leaves(), lr=config.lr),
            AdamState.zeros_like([log_alpha], lr=config.lr),
            act_dim,
        )

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))


def split_head(out: np.ndarray, act_dim: int):
    mean = out[..., :act_dim]
    raw = out[..., act_dim:]
    return mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw


def squashed_sample(mean, log_std, noise):
    """Reparameterized tanh-Gaussian draw; returns (action, log_prob, pre_tanh)."""
    u = mean + np.exp(log_std) * noise
    a = np.tanh(u)
    log_prob = np.sum(-0.5 * noise * noise - log_std - 0.5 * LOG_2PI, axis=-1) - np.sum(
        np.log(1.0 - a * a + SQUASH_EPS), axis=-1
    )
    return a, log_prob, u


def policy_sample(agent: SacAgent, obs, rng: np.random.Generator, deterministic: bool = False):
    out = predict(agent.policy, obs)
    mean, log_std, _ = split_head(out, agent.act_dim)
    if deterministic:
        return np.tanh(mean), None
    a, logp, _ = squashed_sample(mean, log_std, rng.standard_normal(mean.shape))
    return a, logp


def _q(net: MlpParams, obs, act) -> np.ndarray:
    return forward(net, np.concatenate([obs, act], axis=-1))[0][..., 0]


def critic_target(agent: SacAgent, batch: dict, config: SacConfig, rng: np.random.Generator, alpha: float | None = None):
    alpha = agent.alpha if alpha is None else alpha
    out, _ = forward(agent.policy, batch["next_obs"])
    mean, log_std, _ = split_head(out, agent.act_dim)
    a2, logp2, _ = squashed_sample(mean, log_std, rng.standard_normal(mean.shape))
    q_next = np.minimum(_q(agent.q1_target, batch["next_obs"], a2), _q(agent.q2_target, batch["next_obs"], a2))
    soft = q_next - alpha * logp2 if alpha > 0 else q_next
    return batch["rewards"] + config.gamma * (1.0 - batch["dones"]) * soft


def _critic_step(net: MlpParams, opt: AdamState, x: np.ndarray, y: np.ndarray) -> float:
    pred, cache = forward(net, x)
    err = pred[:, 0] - y
    g = (2.0 / x.shape[0]) * err[:, None]
    adam_step(net.leaves(), backward(net, cache, g).leaves(), opt)
    return float(np.mean(err * err))


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> None:
    for t, o in zip(target.leaves(), online.leaves()):
        t *= 1.0 - tau
        t += tau * o


def sac_update(agent: SacAgent, batch: dict, config: SacConfig, rng: np.random.Generator) -> UpdateStats:
    """One gradient step on both critics, the actor, and the temperature; then Polyak targets."""
    b = batch["obs"].shape[0]
    if b == 0:
        raise InsufficientReplay("empty batch")
    a_dim = agent.act_dim
    alpha = agent.alpha
    y = critic_target(agent, batch, config, rng, alpha)

    x = np.concatenate([batch["obs"], batch["actions"]], axis=1)
    q1_loss = _critic_step(agent.q1, agent.q1_opt, x, y)
    q2_loss = _critic_step(agent.q2, agent.q2_opt, x, y)

    # actor
    out, pcache = forward(agent.policy, batch["obs"])
    mean, log_std, raw = split_head(out, a_dim)
    noise = rng.standard_normal(mean.shape)
    a, logp, _ = squashed_sample(mean, log_std, noise)
    xa = np.concatenate([batch["obs"], a], axis=1)
    q1v, c1 = forward(agent.q1, xa)
    q2v, c2 = forward(agent.q2, xa)
    use1 = q1v[:, 0] <= q2v[:, 0]
    q_min = np.where(use1, q1v[:, 0], q2v[:, 0])
    ones = np.ones((b, 1))
    dq1 = backward(agent.q1, c1, ones).input[:, -a_dim:]
    dq2 = backward(agent.q2, c2, ones).input[:, -a_dim:]
    dq_da = np.where(use1[:, None], dq1, dq2)
    one_minus = 1.0 - a * a
    dlogp_du = 2.0 * a * one_minus / (one_minus + SQUASH_EPS)
    g_u = (alpha * dlogp_du - dq_da * one_minus) / b
    g_log_std = -alpha / b + g_u * np.exp(log_std) * noise
    g_log_std = np.where((raw < LOG_STD_MIN) | (raw > LOG_STD_MAX), 0.0, g_log_std)
    policy_loss = float(np.mean(alpha * logp - q_min))
    p_grads = backward(agent.policy, pcache, np.concatenate([g_u, g_log_std], axis=1)).leaves()
    adam_step(agent.policy.leaves(), p_grads, agent.policy_opt)

    target_entropy = -float(a_dim) if config.target_entropy is None else config.target_entropy
    alpha_loss = 0.0
    if config.auto_alpha:
        g_alpha = np.array([-float(np.mean(logp + target_entropy))])
        alpha_loss = float(-agent.log_alpha[0] * np.mean(logp + target_entropy))
        adam_step([agent.log_alpha], [g_alpha], agent.alpha_opt)

    soft_update(agent.q1_target, agent.q1, config.tau)
    soft_update(agent.q2_target, agent.q2, config.tau)

    stats = UpdateStats(policy_loss=policy_loss, value_loss=0.5 * (q1_loss + q2_loss), entropy=float(-np.mean(logp)), minibatches=1)
    stats.extra = {"q1_loss": q1_loss, "q2_loss": q2_loss, "alpha": agent.alpha, "alpha_loss": alpha_loss}
    return stats
