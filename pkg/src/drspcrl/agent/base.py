"""Shared trainer plumbing: random streams, episode bookkeeping, checkpoints."""

from __future__ import annotations

import math

import numpy as np

from ..curriculum import RegretBuffer, Scheduler
from ..environments import Env, EnvSnapshot
from .config import METRIC_COLUMNS, TrainConfig

CHECKPOINT_FORMAT = "drspcrl.checkpoint/1"
STREAMS = ("env", "action", "branch", "curriculum", "shuffle")


class TrainerBase:
    kind = "base"

    def __init__(self, env: Env, config: TrainConfig, scheduler: Scheduler, seed: int):
        if config.kind != self.kind:
            raise ValueError(f"{type(self).__name__} needs agent kind {self.kind!r}, got {config.kind!r}")
        self.env = env
        self.config = config
        self.scheduler = scheduler
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(STREAMS))
        self.rngs = {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}
        self.iteration = 0
        self.env_steps = 0
        self.episode_return = 0.0
        self.obs = env.reset(seed=int(children[0].generate_state(1)[0]))

    # -- episode bookkeeping --------------------------------------------------

    def _advance_env(self, result, finished: list) -> None:
        """Account for one executed step and reset at episode end."""
        self.env_steps += 1
        self.episode_return += result.reward
        if result.done:
            finished.append(self.episode_return)
            self.episode_return = 0.0
            self.obs = self.env.reset()
        else:
            self.obs = result.observation

    @staticmethod
    def _mean_return(finished: list) -> float:
        return float(np.mean(finished)) if finished else math.nan

    def _regret_score_fn(self, beta_estimate: float):
        return None

    def _curriculum_step(self, beta_estimate: float, robust_value: float) -> None:
        score_fn = self._regret_score_fn(beta_estimate) if isinstance(self.scheduler.config, RegretBuffer) else None
        self.scheduler.step(self.iteration, beta_estimate, robust_value, self.rngs["curriculum"], score_fn)
        self.iteration += 1

    def _row(self, epsilon, mean_return, robust_value, beta, policy_loss, dual_loss) -> dict:
        values = (self.iteration, self.env_steps, mean_return, robust_value, epsilon, beta, policy_loss, dual_loss)
        return dict(zip(METRIC_COLUMNS, values))

    def train_iteration(self) -> dict:
        raise NotImplementedError

    def policy(self, deterministic: bool = False):
        raise NotImplementedError

    # -- checkpoints ----------------------------------------------------------

    def _model_state(self) -> dict:
        raise NotImplementedError

    def _load_model_state(self, d: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "env_steps": self.env_steps,
            "episode_return": self.episode_return,
            "observation": np.asarray(self.obs).tolist(),
            "env_state": self.env.snapshot().state,
            "rng": {name: rng.bit_generator.state for name, rng in self.rngs.items()},
            "scheduler": self.scheduler.to_dict(),
            "model": self._model_state(),
            "policy": self.policy().to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, env: Env) -> "TrainerBase":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
        config = TrainConfig.from_dict(d["config"])
        trainer = cls(env, config, Scheduler.from_dict(d["scheduler"]), d["seed"])
        trainer.iteration = int(d["iteration"])
        trainer.env_steps = int(d["env_steps"])
        trainer.episode_return = float(d["episode_return"])
        trainer.obs = np.asarray(d["observation"], dtype=float)
        env.restore(EnvSnapshot(env.name, d["env_state"]))
        for name, state in d["rng"].items():
            trainer.rngs[name].bit_generator.state = state
        trainer._load_model_state(d["model"])
        return trainer
