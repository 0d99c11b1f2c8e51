"""On-policy rollout storage and an off-policy ring buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybrid_manip import kernels
from hybrid_manip.errors import EmptyBuffer, InsufficientReplay, LengthMismatch


def compute_gae(rewards, values, dones, bootstrap_value: float, gamma: float, lam: float):
    """Generalized advantage estimates and lambda-returns.

    ``dones[t]`` marks that the transition at t ended an episode, so the
    value of the following state is not bootstrapped across it.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise LengthMismatch(f"rewards {rewards.shape}, values {values.shape}, dones {dones.shape} must be equal-length vectors")
    if not 0.0 < gamma <= 1.0 or not 0.0 <= lam <= 1.0:
        raise ValueError(f"need 0 < gamma <= 1 and 0 <= lambda <= 1, got {gamma}, {lam}")
    return kernels.gae(rewards, values, dones, float(bootstrap_value), float(gamma), float(lam))


class RolloutBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity)
        self.log_probs = np.zeros(self.capacity)
        self.values = np.zeros(self.capacity)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, obs, action, reward, done, log_prob, value) -> None:
        if self.full:
            raise OverflowError("rollout buffer is full; run an update first")
        i = self.size
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = float(done)
        self.log_probs[i] = log_prob
        self.values[i] = value
        self.size += 1

    def clear(self) -> None:
        self.size = 0

    def view(self) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise EmptyBuffer("rollout buffer is empty")
        n = self.size
        return {
            "obs": self.obs[:n],
            "actions": self.actions[:n],
            "rewards": self.rewards[:n],
            "dones": self.dones[:n],
            "log_probs": self.log_probs[:n],
            "values": self.values[:n],
        }


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, rng: np.random.Generator):
        self.capacity = int(capacity)
        self.rng = rng
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.dones = np.zeros(self.capacity)
        self.inserted_at = np.full(self.capacity, -1, dtype=np.int64)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.inserted_at[i] = self.inserted
        self.inserted += 1

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        n = len(self)
        if n < batch_size:
            raise InsufficientReplay(f"replay holds {n} transitions, batch needs {batch_size}")
        idx = self.rng.integers(0, n, size=batch_size)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "dones": self.dones[idx],
            "inserted_at": self.inserted_at[idx],
        }


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    log_prob: float | None = None
    value: float | None = None
