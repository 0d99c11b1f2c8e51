"""Clipped-surrogate PPO over a Gaussian policy and a separate value network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hybrid_manip.errors import EmptyBuffer, NonFiniteLoss
from hybrid_manip.rl.buffers import RolloutBuffer, compute_gae
from hybrid_manip.rl.mlp import (
    HIDDEN,
    LOG_STD_MAX,
    LOG_STD_MIN,
    AdamState,
    GaussianPolicyParams,
    MlpParams,
    adam_step,
    backward,
    clip_grad_norm,
    entropy,
    forward,
    gaussian_log_prob,
    init_mlp,
)


@dataclass
class PpoConfig:
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 10
    minibatch: int = 64
    horizon: int = 2048
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    max_grad_norm: float = 0.5
    lr: float = 3e-4
    init_log_std: float = -0.5

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 <= self.lam <= 1 or not self.clip > 0:
            raise ValueError(f"invalid PPO config: gamma={self.gamma} lam={self.lam} clip={self.clip}")


@dataclass
class PpoAgent:
    policy: GaussianPolicyParams
    value: MlpParams
    policy_opt: AdamState
    value_opt: AdamState

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, rng: np.random.Generator, config: PpoConfig = PpoConfig(), hidden=HIDDEN):
        mean_net = init_mlp((obs_dim, *hidden, act_dim), rng, out_scale=0.01)
        policy = GaussianPolicyParams(mean_net, np.full(act_dim, config.init_log_std))
        value = init_mlp((obs_dim, *hidden, 1), rng, out_scale=1.0)
        return cls(
            policy,
            value,
            AdamState.zeros_like(policy.leaves(), lr=config.lr),
            AdamState.zeros_like(value.leaves(), lr=config.lr),
        )


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    minibatches: int = 0
    extra: dict = field(default_factory=dict)
    logged: list = field(default_factory=list)


def policy_loss_and_grads(
    policy: GaussianPolicyParams,
    obs: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip: float,
    ent_coef: float,
):
    """Negated clipped surrogate (minus entropy bonus) and its gradient.

    Returns ``(loss, grads, info)`` with grads ordered like ``policy.leaves()``.
    """
    b = obs.shape[0]
    mean, cache = forward(policy.mean_net, obs)
    log_std = policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    log_probs = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    surrogate = np.minimum(unclipped, clipped)
    ent = entropy(policy)
    loss = -float(np.mean(surrogate)) - ent_coef * ent

    # d(-mean surrogate)/d log_prob: the clipped branch is flat in theta.
    active = unclipped <= clipped
    g_logp = np.where(active, -advantages * ratio, 0.0) / b
    diff = actions - mean
    g_mean = g_logp[:, None] * diff * inv_var
    g_log_std = (g_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - ent_coef
    g_log_std = np.where(
        ((log_std <= LOG_STD_MIN) & (g_log_std > 0)) | ((log_std >= LOG_STD_MAX) & (g_log_std < 0)), 0.0, g_log_std
    )
    grads = backward(policy.mean_net, cache, g_mean)
    info = {
        "ratio": ratio,
        "surrogate": surrogate,
        "log_probs": log_probs,
        "entropy": ent,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip)),
        "approx_kl": float(np.mean(old_log_probs - log_probs)),
    }
    return loss, grads.leaves() + [g_log_std], info


def value_loss_and_grads(value: MlpParams, obs: np.ndarray, returns: np.ndarray, vf_coef: float):
    pred, cache = forward(value, obs)
    err = pred[:, 0] - returns
    loss = vf_coef * float(np.mean(err * err))
    g = (2.0 * vf_coef / obs.shape[0]) * err[:, None]
    return loss, backward(value, cache, g).leaves()


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = float(adv.std())
    if std < 1e-8:
        # a constant batch carries no preference; avoid amplifying mean rounding
        return np.zeros_like(adv)
    return (adv - adv.mean()) / std


def ppo_update(
    agent: PpoAgent,
    buffer: RolloutBuffer,
    config: PpoConfig,
    rng: np.random.Generator,
    bootstrap_value: float = 0.0,
    log_minibatches: bool = False,
) -> UpdateStats:
    """Several epochs of minibatch Adam steps on the clipped objective, then clear the buffer."""
    if len(buffer) == 0:
        raise EmptyBuffer("PPO update needs a non-empty rollout buffer")
    data = buffer.view()
    adv, returns = compute_gae(data["rewards"], data["values"], data["dones"], bootstrap_value, config.gamma, config.lam)
    adv = normalize_advantages(adv)
    n = len(buffer)
    mb = min(config.minibatch, n)
    stats = UpdateStats()
    sums = np.zeros(5)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            p_loss, p_grads, info = policy_loss_and_grads(
                agent.policy,
                data["obs"][idx],
                data["actions"][idx],
                data["log_probs"][idx],
                adv[idx],
                config.clip,
                config.ent_coef,
            )
            v_loss, v_grads = value_loss_and_grads(agent.value, data["obs"][idx], returns[idx], config.vf_coef)
            if not (np.isfinite(p_loss) and np.isfinite(v_loss)):
                buffer.clear()
                raise NonFiniteLoss(f"PPO loss became non-finite (policy {p_loss}, value {v_loss})")
            if log_minibatches:
                stats.logged.append(
                    {
                        "ratio": info["ratio"].copy(),
                        "advantages": adv[idx].copy(),
                        "surrogate": info["surrogate"].copy(),
                        "clip": config.clip,
                    }
                )
            clip_grad_norm(p_grads, config.max_grad_norm)
            clip_grad_norm(v_grads, config.max_grad_norm)
            adam_step(agent.policy.leaves(), p_grads, agent.policy_opt)
            np.clip(agent.policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=agent.policy.log_std)
            adam_step(agent.value.leaves(), v_grads, agent.value_opt)
            sums += (p_loss, v_loss, info["entropy"], info["approx_kl"], info["clip_fraction"])
            stats.minibatches += 1
    sums /= max(stats.minibatches, 1)
    stats.policy_loss, stats.value_loss, stats.entropy, stats.approx_kl, stats.clip_fraction = (float(s) for s in sums)
    buffer.clear()
    return stats
