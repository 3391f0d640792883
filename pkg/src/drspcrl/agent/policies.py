"""Frozen, serializable policies used for evaluation and sweeps.

A policy is called as ``policy(observation, rng) -> action``.
"""

from __future__ import annotations

import numpy as np

from .networks import MlpSpec, log_softmax, mlp_forward, params_from_lists, params_to_lists


def softmax_table(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=float)))


class TabularPolicy:
    """Softmax table over the chain's cells; observations are decoded by argmax."""

    kind = "tabular"

    def __init__(self, logits, deterministic: bool = False):
        self.logits = np.array(logits, dtype=float)
        self.deterministic = deterministic

    @property
    def table(self) -> np.ndarray:
        return softmax_table(self.logits)

    def __call__(self, observation, rng: np.random.Generator) -> int:
        s = int(np.argmax(observation))
        if self.deterministic:
            return int(np.argmax(self.logits[s]))
        p = self.table[s]
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), p.size - 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "logits": self.logits.tolist(), "deterministic": self.deterministic}


class MlpPolicy:
    """Categorical (discrete) or Gaussian (box) policy over an MLP trunk.

    Gaussian actions are sampled unclipped and clipped to the box on execution.
    """

    kind = "mlp"

    def __init__(self, spec: MlpSpec, params, log_std=None, low=None, high=None, deterministic: bool = False):
        self.spec = spec
        self.params = [np.asarray(p, dtype=float) for p in params]
        self.log_std = None if log_std is None else np.asarray(log_std, dtype=float)
        self.low, self.high = low, high
        self.deterministic = deterministic

    @property
    def discrete(self) -> bool:
        return self.log_std is None

    def sample(self, observation, rng: np.random.Generator):
        """Returns (action as sampled, log-probability input): raw action for Gaussian heads."""
        out = mlp_forward(self.spec, self.params, np.asarray(observation, dtype=float)[None, :])[0]
        if self.discrete:
            if self.deterministic:
                return int(np.argmax(out))
            p = np.exp(log_softmax(out))
            return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), p.size - 1))
        if self.deterministic:
            return out.copy()
        return out + np.exp(self.log_std) * rng.standard_normal(out.shape)

    def execute(self, raw_action):
        if self.discrete:
            return int(raw_action)
        return np.clip(raw_action, self.low, self.high)

    def __call__(self, observation, rng: np.random.Generator):
        return self.execute(self.sample(observation, rng))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spec": {"input_dim": self.spec.input_dim, "output_dim": self.spec.output_dim,
                     "hidden_dims": list(self.spec.hidden_dims)},
            "params": params_to_lists(self.params),
            "log_std": None if self.log_std is None else self.log_std.tolist(),
            "low": self.low,
            "high": self.high,
            "deterministic": self.deterministic,
        }


def policy_from_dict(d: dict):
    if d["kind"] == TabularPolicy.kind:
        return TabularPolicy(d["logits"], d.get("deterministic", False))
    if d["kind"] == MlpPolicy.kind:
        spec = MlpSpec(**d["spec"])
        return MlpPolicy(spec, params_from_lists(d["params"]), d["log_std"], d["low"], d["high"], d.get("deterministic", False))
    raise ValueError(f"unknown policy kind {d['kind']!r}")
