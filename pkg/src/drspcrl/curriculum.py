"""Schedulers for the robustness budget epsilon.

``drspcrl_step`` is the dual-guided self-paced rule

    eps <- clip(eps - lr * (beta + 2 * alpha * (eps - budget)), 0, budget)

where ``beta`` estimates the optimal KL dual variable, i.e. the marginal
loss of robust value per unit of budget.  The remaining schedulers are the
comparison baselines: fixed budget, linear ramp, plateau-triggered ramp and
a regret-scored replay buffer of budgets.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Union

import numpy as np


@dataclass
class CurriculumState:
    epsilon_t: float = 0.0
    epsilon_budget: float = 1.0
    alpha: float = 0.5
    lambda_curr: float = 0.01
    epsilon_start: float = 0.0
    step_count: int = 0
    history: list = field(default_factory=list)  # (step, epsilon, beta_estimate)

    def __post_init__(self):
        if self.epsilon_budget <= 0:
            raise ValueError("epsilon_budget must be positive")
        if self.alpha < 0 or self.lambda_curr <= 0:
            raise ValueError("alpha must be >= 0 and lambda_curr > 0")
        self.epsilon_t = self.project(self.epsilon_t)

    def project(self, eps: float) -> float:
        return float(min(max(eps, 0.0), self.epsilon_budget))

    def record(self, epsilon: float, beta_estimate: float) -> None:
        self.history.append((self.step_count, float(epsilon), float(beta_estimate)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["history"] = [list(h) for h in self.history]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CurriculumState":
        d = dict(d)
        d["history"] = [tuple(h) for h in d.get("history", [])]
        return cls(**d)


@dataclass(frozen=True)
class DrSpcrl:
    pass


@dataclass(frozen=True)
class Fixed:
    # None holds epsilon at the budget
    epsilon: float | None = None


@dataclass(frozen=True)
class Linear:
    eps_step: float = 0.01
    start_iteration: int = 5


@dataclass(frozen=True)
class Plateau:
    interval: int = 10
    start_iteration: int = 5
    threshold: float = 0.1
    window: int = 10
    eps_step: float = 0.01


@dataclass(frozen=True)
class RegretBuffer:
    buffer_size: int = 50
    replay_prob: float = 0.8
    edit_noise_std: float = 0.01
    generator_range: float = 0.02
    interval: int = 100


SchedulerConfig = Union[DrSpcrl, Fixed, Linear, Plateau, RegretBuffer]

VARIANTS = {
    "drspcrl": DrSpcrl,
    "fixed": Fixed,
    "linear": Linear,
    "plateau": Plateau,
    "regret_buffer": RegretBuffer,
}


def variant_name(cfg: SchedulerConfig) -> str:
    for name, cls in VARIANTS.items():
        if type(cfg) is cls:
            return name
    raise TypeError(f"unknown scheduler config {cfg!r}")


def validate_scheduler(cfg: SchedulerConfig) -> None:
    if isinstance(cfg, Fixed) and cfg.epsilon is not None and cfg.epsilon < 0:
        raise ValueError("fixed epsilon must be non-negative")
    if isinstance(cfg, Linear) and (cfg.eps_step < 0 or cfg.start_iteration < 0):
        raise ValueError("linear schedule needs eps_step >= 0 and start_iteration >= 0")
    if isinstance(cfg, Plateau):
        if cfg.interval < 1 or cfg.window < 1 or cfg.start_iteration < 0 or cfg.eps_step < 0 or cfg.threshold < 0:
            raise ValueError(f"invalid plateau settings {cfg}")
    if isinstance(cfg, RegretBuffer):
        if cfg.buffer_size < 1 or cfg.interval < 1:
            raise ValueError("buffer_size and interval must be positive")
        if not 0 <= cfg.replay_prob <= 1:
            raise ValueError("replay_prob must lie in [0, 1]")
        if cfg.edit_noise_std < 0 or cfg.generator_range < 0:
            raise ValueError("edit noise and generator range must be non-negative")


def drspcrl_step(state: CurriculumState, beta_estimate: float) -> CurriculumState:
    if beta_estimate < 0 or not math.isfinite(beta_estimate):
        raise ValueError(f"beta_estimate must be a finite non-negative number, got {beta_estimate!r}")
    state.record(state.epsilon_t, beta_estimate)
    grad_reg = 2.0 * state.alpha * (state.epsilon_t - state.epsilon_budget)
    state.epsilon_t = state.project(state.epsilon_t - state.lambda_curr * (beta_estimate + grad_reg))
    state.step_count += 1
    return state


def fixed_step(state: CurriculumState, config: Fixed, beta_estimate: float = 0.0) -> CurriculumState:
    state.record(state.epsilon_t, beta_estimate)
    target = state.epsilon_budget if config.epsilon is None else config.epsilon
    state.epsilon_t = state.project(target)
    state.step_count += 1
    return state


def linear_step(state: CurriculumState, iteration: int, config: Linear, beta_estimate: float = 0.0) -> CurriculumState:
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    state.record(state.epsilon_t, beta_estimate)
    if iteration >= config.start_iteration:
        state.epsilon_t = state.project(state.epsilon_t + config.eps_step)
    state.step_count += 1
    return state


def plateau_step(
    state: CurriculumState, robust_value_history, config: Plateau, beta_estimate: float = 0.0
) -> CurriculumState:
    """Raise epsilon by one step when the windowed robust value stopped improving.

    Compares the mean of the last ``window`` recorded values against the
    window before it; a relative improvement below ``threshold`` counts as a
    plateau.  With fewer than two full windows the budget is held.
    """
    state.record(state.epsilon_t, beta_estimate)
    hist = np.asarray(robust_value_history, dtype=float)
    w = config.window
    if hist.size >= 2 * w:
        recent = hist[-w:].mean()
        previous = hist[-2 * w : -w].mean()
        improvement = (recent - previous) / max(abs(previous), 1e-12)
        if improvement < config.threshold:
            state.epsilon_t = state.project(state.epsilon_t + config.eps_step)
    state.step_count += 1
    return state


@dataclass
class RegretBufferState:
    entries: list = field(default_factory=list)  # [epsilon, score]

    def add(self, epsilon: float, score: float, capacity: int) -> None:
        self.entries.append([float(epsilon), float(score)])
        if len(self.entries) > capacity:
            # evict lowest regret; earliest entry wins ties
            worst = min(range(len(self.entries)), key=lambda i: self.entries[i][1])
            del self.entries[worst]

    def best(self) -> float:
        top = max(range(len(self.entries)), key=lambda i: self.entries[i][1])
        return self.entries[top][0]


def regret_step(
    state: CurriculumState,
    config: RegretBuffer,
    rng: np.random.Generator,
    regret_score_fn: Callable[[float], float],
    buffer: RegretBufferState,
    beta_estimate: float = 0.0,
) -> CurriculumState:
    """Replay-and-edit the highest-regret budget, or generate a nearby one."""
    state.record(state.epsilon_t, beta_estimate)
    replay = rng.random() < config.replay_prob
    if replay and buffer.entries:
        candidate = buffer.best() + rng.normal(0.0, config.edit_noise_std)
    else:
        r = config.generator_range
        candidate = state.epsilon_t + rng.uniform(-r, r)
    candidate = state.project(candidate)
    buffer.add(candidate, regret_score_fn(candidate), config.buffer_size)
    state.epsilon_t = candidate
    state.step_count += 1
    return state


class Scheduler:
    """One training loop's view of a curriculum: config + state + variant bookkeeping."""

    def __init__(self, config: SchedulerConfig, state: CurriculumState):
        validate_scheduler(config)
        self.config = config
        self.state = state
        self.robust_values: list[float] = []
        self.buffer = RegretBufferState()
        if isinstance(config, Fixed):
            target = state.epsilon_budget if config.epsilon is None else config.epsilon
            state.epsilon_t = state.project(target)

    @property
    def epsilon(self) -> float:
        return self.state.epsilon_t

    def step(
        self,
        iteration: int,
        beta_estimate: float,
        robust_value: float,
        rng: np.random.Generator,
        regret_score_fn: Callable[[float], float] | None = None,
    ) -> float:
        """Advance after training iteration ``iteration`` (0-based); returns the new epsilon."""
        cfg = self.config
        self.robust_values.append(float(robust_value))
        if isinstance(cfg, DrSpcrl):
            drspcrl_step(self.state, beta_estimate)
        elif isinstance(cfg, Fixed):
            fixed_step(self.state, cfg, beta_estimate)
        elif isinstance(cfg, Linear):
            linear_step(self.state, iteration, cfg, beta_estimate)
        elif isinstance(cfg, Plateau):
            due = iteration >= cfg.start_iteration and (iteration - cfg.start_iteration) % cfg.interval == 0
            if due:
                plateau_step(self.state, self.robust_values, cfg, beta_estimate)
            else:
                self._hold(beta_estimate)
        elif isinstance(cfg, RegretBuffer):
            if (iteration + 1) % cfg.interval == 0:
                score = regret_score_fn or (lambda eps: beta_estimate)
                regret_step(self.state, cfg, rng, score, self.buffer, beta_estimate)
            else:
                self._hold(beta_estimate)
        return self.state.epsilon_t

    def _hold(self, beta_estimate: float) -> None:
        self.state.record(self.state.epsilon_t, beta_estimate)
        self.state.step_count += 1

    def to_dict(self) -> dict:
        return {
            "variant": variant_name(self.config),
            "config": asdict(self.config),
            "state": self.state.to_dict(),
            "robust_values": list(self.robust_values),
            "buffer": [list(e) for e in self.buffer.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scheduler":
        config = VARIANTS[d["variant"]](**d["config"])
        sched = cls.__new__(cls)
        sched.config = config
        sched.state = CurriculumState.from_dict(d["state"])
        sched.robust_values = list(d["robust_values"])
        sched.buffer = RegretBufferState([list(e) for e in d["buffer"]])
        return sched
