"""Pure-Python/numpy reference versions of the compiled kernels.

Signatures and results match ``_ckernels`` exactly for GAE; the MLP and
log-density kernels agree to rounding (summation order differs).
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def gae(rewards, values, dones, bootstrap_value, gamma, lam):
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = rewards.shape[0]
    adv = np.empty(n, dtype=np.float64)
    last = 0.0
    next_value = float(bootstrap_value)
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def mlp_forward_vec(weights, biases, x):
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = w @ h + b
        if i < last:
            h = np.tanh(h)
    return h


def gaussian_log_prob(x, mean, log_std):
    x = np.asarray(x, dtype=np.float64)
    z = (x - mean) * np.exp(-log_std)
    return float(-0.5 * np.sum(z * z) - np.sum(log_std) - 0.5 * LOG_2PI * x.shape[0])
