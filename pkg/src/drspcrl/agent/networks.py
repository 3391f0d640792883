"""Small tanh MLPs with hand-derived backpropagation, policy heads and Adam.

Parameters are plain lists ``[W0, b0, W1, b1, ...]`` of numpy arrays so they
serialize to JSON without ceremony.  ``W_k`` has shape (fan_in, fan_out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OUTPUTS = ("identity", "softplus")
ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_dims: tuple = (64, 64)
    activation: str = "tanh"
    output: str = "identity"  # "softplus" adds beta_floor: the dual head
    beta_floor: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"all layer sizes must be positive: {self}")
        if self.activation not in ACTIVATIONS or self.output not in OUTPUTS:
            raise ValueError(f"unknown activation/output in {self}")
        if self.output == "softplus" and not self.beta_floor > 0:
            raise ValueError("beta_floor must be positive")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.output_dim]


def init_params(spec: MlpSpec, rng: np.random.Generator, output_scale: float = 1.0) -> list[np.ndarray]:
    """Orthogonal hidden weights (gain sqrt 2), zero biases, scaled last layer."""
    dims = spec.layer_dims
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        a = rng.normal(size=(max(fan_in, fan_out), min(fan_in, fan_out)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        w = q if fan_in >= fan_out else q.T
        gain = output_scale if k == len(dims) - 2 else math.sqrt(2.0)
        params.append(gain * w[:fan_in, :fan_out])
        params.append(np.zeros(fan_out))
    return params


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check(spec: MlpSpec, params, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must have shape (batch, {spec.input_dim}), got {x.shape}")
    dims = spec.layer_dims
    if len(params) != 2 * (len(dims) - 1):
        raise ValueError("parameter list does not match the layer layout")
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if params[2 * k].shape != (fan_in, fan_out) or params[2 * k + 1].shape != (fan_out,):
            raise ValueError(f"layer {k} parameter shapes do not match the spec")
    return x


def mlp_forward(spec: MlpSpec, params, x, return_cache: bool = False):
    x = _check(spec, params, x)
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.tanh(z) if spec.activation == "tanh" else z
            acts.append(h)
        else:
            out = softplus(z) + spec.beta_floor if spec.output == "softplus" else z
            acts.append(z)
    return (out, acts) if return_cache else out


def mlp_gradients(spec: MlpSpec, params, inputs, upstream) -> list[np.ndarray]:
    """Gradient of sum(upstream * outputs) with respect to every parameter."""
    out, acts = mlp_forward(spec, params, inputs, return_cache=True)
    g = np.asarray(upstream, dtype=float)
    if g.shape != out.shape:
        raise ValueError(f"upstream shape {g.shape} does not match outputs {out.shape}")
    n_layers = len(params) // 2
    if spec.output == "softplus":
        g = g * sigmoid(acts[-1])
    grads = [None] * len(params)
    for k in reversed(range(n_layers)):
        h_in = acts[k]
        grads[2 * k] = h_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = g @ params[2 * k].T
            if spec.activation == "tanh":
                g = g * (1.0 - h_in**2)
    return grads


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        """Descent step in place on ``params``."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Adam":
        d = dict(d)
        d["m"] = [np.asarray(a, dtype=float) for a in d["m"]]
        d["v"] = [np.asarray(a, dtype=float) for a in d["v"]]
        return cls(**d)


# --- policy heads -----------------------------------------------------------

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    z = (actions - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_log_prob_grads(mean, log_std, actions):
    """d log p / d mean (batch, d) and d log p / d log_std (batch, d)."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return z / std, z * z - 1.0


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def categorical_log_prob(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    lp = log_softmax(logits)
    return lp[np.arange(lp.shape[0]), np.asarray(actions, dtype=int)]


def categorical_log_prob_grads(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """d log p(a) / d logits = onehot(a) - softmax(logits)."""
    g = -np.exp(log_softmax(logits))
    g[np.arange(g.shape[0]), np.asarray(actions, dtype=int)] += 1.0
    return g


def params_to_lists(params) -> list:
    return [p.tolist() for p in params]


def params_from_lists(lists) -> list[np.ndarray]:
    return [np.asarray(p, dtype=float) for p in lists]
