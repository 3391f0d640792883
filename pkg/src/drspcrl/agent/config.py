"""Training configuration and the per-iteration metrics row."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

KINDS = ("actor_critic", "tabular")

METRIC_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_episode_return",
    "robust_value_estimate",
    "epsilon",
    "beta_estimate",
    "policy_loss",
    "dual_loss",
)


class TrainingDivergence(RuntimeError):
    """A loss or parameter went non-finite; carries diagnostics for the run manifest."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    """Defaults follow the usual on-policy clipped-surrogate settings.

    ``kind="tabular"`` swaps the networks for a softmax table with exact robust
    evaluation and exact dual solves; only ``total_iterations``,
    ``rollout_steps``, ``gamma``, ``tabular_lr``, ``beta_max`` and
    ``eval_tol`` matter there.
    """

    kind: str = "actor_critic"
    total_iterations: int = 300
    rollout_steps: int = 2048
    dual_updates: int = 5
    dual_lr: float = 5e-4
    policy_lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatches: int = 32
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    clip_value_loss: bool = True
    hidden_dims: tuple = (64, 64)
    dual_hidden_dims: tuple = (64, 64)
    beta_floor: float = 1e-3
    log_std_init: float = 0.0
    branch_samples: int | None = None  # None: 8 for stochastic envs, 1 for deterministic ones
    beta_max: float = 1e6  # ceiling on beta estimates fed to the curriculum
    tabular_lr: float = 0.5
    eval_tol: float = 1e-6
    checkpoint_interval: int = 0  # 0: only at the end

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.dual_hidden_dims = tuple(int(h) for h in self.dual_hidden_dims)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"agent kind must be one of {KINDS}, got {self.kind!r}")
        positive = ("total_iterations", "rollout_steps", "dual_updates", "dual_lr", "policy_lr", "epochs",
                    "minibatches", "beta_floor", "beta_max", "tabular_lr", "eval_tol")
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0 <= self.gamma < 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("gamma must lie in [0, 1) and gae_lambda in [0, 1]")
        if self.clip <= 0 or self.value_coef < 0 or self.entropy_coef < 0 or self.max_grad_norm < 0:
            raise ValueError("clip must be positive; coefficients and max_grad_norm non-negative")
        if self.branch_samples is not None and self.branch_samples < 1:
            raise ValueError("branch_samples must be at least 1")
        if self.minibatches > self.rollout_steps:
            raise ValueError("more minibatches than rollout steps")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["dual_hidden_dims"] = list(self.dual_hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown agent keys: {sorted(unknown)}")
        return cls(**d)


def finite_or_raise(name: str, value: float, **context) -> float:
    if not math.isfinite(value):
        raise TrainingDivergence(f"{name} is not finite", {name: value, **context})
    return value
