"""Dense tanh networks with hand-written backprop, Adam, and a diagonal Gaussian head.

Everything is float64. Forward accepts a single vector or a (batch, n_in)
matrix; backward mirrors whatever shape forward saw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hybrid_manip import kernels
from hybrid_manip.errors import DimensionMismatch, NonFiniteGradient

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)
HIDDEN = (64, 64)


@dataclass
class MlpParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[l] has shape (sizes[l+1], sizes[l])
    biases: list[np.ndarray]

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionMismatch("layer count does not match sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[l + 1], self.sizes[l]) or b.shape != (self.sizes[l + 1],):
                raise DimensionMismatch(f"layer {l}: weight {w.shape} / bias {b.shape} vs sizes {self.sizes}")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def leaves(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def num_params(self) -> int:
        return sum(a.size for a in self.leaves())


def init_mlp(sizes, rng: np.random.Generator, out_scale: float = 1.0) -> MlpParams:
    """LeCun-normal weights, zero biases; the last layer is scaled by ``out_scale``."""
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        w = rng.standard_normal((sizes[l + 1], sizes[l])) / np.sqrt(sizes[l])
        if l == len(sizes) - 2:
            w *= out_scale
        weights.append(np.ascontiguousarray(w))
        biases.append(np.zeros(sizes[l + 1]))
    return MlpParams(sizes, weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    single: bool


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray | None = None

    def leaves(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.n_in:
        raise DimensionMismatch(f"input has {h.shape[1]} features, network expects {params.n_in}")
    inputs, pre = [], []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = np.tanh(z) if l < last else z
    return (h[0] if single else h), ForwardCache(inputs, pre, single)


def predict(params: MlpParams, x) -> np.ndarray:
    """Forward without a cache; single vectors go through the compiled kernel."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != params.n_in:
            raise DimensionMismatch(f"input has {x.shape[0]} features, network expects {params.n_in}")
        return kernels.mlp_forward_vec(params.weights, params.biases, x)
    return forward(params, x)[0]


def backward(params: MlpParams, cache: ForwardCache, output_grad) -> Gradients:
    """Reverse-mode gradients of a scalar loss given dloss/doutput.

    For batched forwards the gradients are summed over the batch; scale
    ``output_grad`` by 1/batch for a mean loss.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise DimensionMismatch(f"output_grad shape {g.shape} vs network output {cache.pre[-1].shape}")
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for l in range(n - 1, -1, -1):
        if l < n - 1:
            g = g * (1.0 - np.tanh(cache.pre[l]) ** 2)
        gw[l] = g.T @ cache.inputs[l]
        gb[l] = g.sum(axis=0)
        g = g @ params.weights[l]
    return Gradients(gw, gb, g[0] if cache.single else g)


# Adam ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, leaves, **hyper) -> "AdamState":
        return cls([np.zeros_like(a) for a in leaves], [np.zeros_like(a) for a in leaves], 0, **hyper)


def adam_step(leaves: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam update applied in place to ``leaves``."""
    if len(leaves) != len(grads) or len(leaves) != len(state.m):
        raise DimensionMismatch("parameter / gradient / moment counts differ")
    for p, g in zip(leaves, grads):
        if p.shape != g.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} vs parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(leaves, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return leaves, state


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# Gaussian policy ----------------------------------------------------------------


@dataclass
class GaussianPolicyParams:
    """Diagonal Gaussian with state-independent log-std."""

    mean_net: MlpParams
    log_std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
        if self.log_std.shape != (self.mean_net.n_out,):
            raise DimensionMismatch("log_std length must equal action dimension")

    @property
    def action_dim(self) -> int:
        return self.mean_net.n_out

    def leaves(self) -> list[np.ndarray]:
        return self.mean_net.leaves() + [self.log_std]

    def copy(self) -> "GaussianPolicyParams":
        return GaussianPolicyParams(self.mean_net.copy(), self.log_std.copy())


def gaussian_log_prob(x, mean, log_std) -> np.ndarray | float:
    """Diagonal-Gaussian log density; batched over leading axes of x/mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return kernels.gaussian_log_prob(x, np.asarray(mean, dtype=np.float64), np.asarray(log_std, dtype=np.float64))
    z = (x - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std * np.ones_like(x), axis=-1) - 0.5 * LOG_2PI * x.shape[-1]


def sample_action(policy: GaussianPolicyParams, obs, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    mean = predict(policy.mean_net, obs)
    log_std = np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)
    action = mean + np.exp(log_std) * rng.standard_normal(mean.shape[0])
    return action, float(gaussian_log_prob(action, mean, log_std))


def entropy(policy: GaussianPolicyParams) -> float:
    log_std = np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)
    return float(0.5 * np.sum(LOG_2PI + 1.0 + 2.0 * log_std))
