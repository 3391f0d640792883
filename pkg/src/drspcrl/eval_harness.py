"""Held-out perturbation suites and the episode-level evaluation protocol.

Three perturbation kinds, one per report:

* ``observation``: the policy sees s + N(0, sigma^2 I)
* ``action``: with probability p the executed action is uniform over the action space
* ``environment``: every perturbable physics parameter is scaled by U(1 - delta, 1 + delta)
  relative to nominal, redrawn at the start of each episode

Episode i of a report draws its seeds from SeedSequence([master_seed, i]), split
into independent env / policy / perturbation streams.  The episode seeds
therefore do not depend on the perturbation level, which pairs episodes across
levels, and a zero level consumes nothing from the env or policy streams.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .environments import Box, Discrete, Env

PERTURBATION_KINDS = ("observation", "action", "environment")
SWEEP_COLUMNS = ("perturbation_kind", "level", "mean_return", "std_error", "ci95_low", "ci95_high", "episodes", "seed")
DEFAULT_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
Z95 = 1.96


class EvaluationError(RuntimeError):
    def __init__(self, message: str, episode: int, master_seed: int):
        super().__init__(f"{message} (episode {episode}, master_seed {master_seed})")
        self.episode = episode
        self.master_seed = master_seed


@dataclass(frozen=True)
class PerturbationSpec:
    """One perturbation kind at one level: sigma_obs, p_act or delta_env."""

    kind: str
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"perturbation kind must be one of {PERTURBATION_KINDS}, got {self.kind!r}")
        lv = float(self.level)
        if not math.isfinite(lv):
            raise ValueError("level must be finite")
        if self.kind == "observation" and lv < 0:
            raise ValueError(f"sigma_obs must be >= 0, got {lv}")
        if self.kind == "action" and not 0 <= lv <= 1:
            raise ValueError(f"p_act must lie in [0, 1], got {lv}")
        if self.kind == "environment" and not 0 <= lv < 1:
            raise ValueError(f"delta_env must lie in [0, 1), got {lv}")
        object.__setattr__(self, "level", lv)

    @classmethod
    def nominal(cls) -> "PerturbationSpec":
        return cls("observation", 0.0)


@dataclass
class EvalReport:
    spec: PerturbationSpec
    episodes: int
    mean_return: float
    std_error: float
    ci95_low: float
    ci95_high: float
    per_episode_returns: list = field(default_factory=list)
    seed: int = 0

    @classmethod
    def from_returns(cls, spec: PerturbationSpec, returns, seed: int) -> "EvalReport":
        r = np.asarray(returns, dtype=float)
        mean = float(r.mean())
        se = float(r.std(ddof=1) / math.sqrt(r.size))
        return cls(spec, int(r.size), mean, se, mean - Z95 * se, mean + Z95 * se, r.tolist(), seed)

    def csv_row(self) -> dict:
        values = (self.spec.kind, self.spec.level, self.mean_return, self.std_error, self.ci95_low, self.ci95_high,
                  self.episodes, self.seed)
        return dict(zip(SWEEP_COLUMNS, values))


def perturb_observation(obs, sigma_obs: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_obs < 0:
        raise ValueError("sigma_obs must be >= 0")
    obs = np.asarray(obs, dtype=float)
    if sigma_obs == 0:
        return obs.copy()
    return obs + rng.normal(0.0, sigma_obs, size=obs.shape)


def perturb_action(action, p_act: float, action_space, rng: np.random.Generator):
    """Swap in a uniform action with probability p_act; the gate draw happens even at p = 0."""
    if not 0 <= p_act <= 1:
        raise ValueError("p_act must lie in [0, 1]")
    if rng.random() < p_act:
        if isinstance(action_space, (Discrete, Box)):
            return action_space.sample(rng)
        raise TypeError(f"unsupported action space {action_space!r}")
    return action


def perturb_physics(nominal: dict, delta_env: float, rng: np.random.Generator, names=None) -> dict:
    """Scale the named parameters (default: all) by independent U(1 - delta, 1 + delta) draws."""
    if not 0 <= delta_env < 1:
        raise ValueError("delta_env must lie in [0, 1)")
    names = tuple(nominal) if names is None else tuple(names)
    out = dict(nominal)
    for k in names:
        out[k] = nominal[k] * rng.uniform(1.0 - delta_env, 1.0 + delta_env)
    return out


def episode_streams(master_seed: int, episode: int):
    env_ss, policy_ss, noise_ss = np.random.SeedSequence([int(master_seed), int(episode)]).spawn(3)
    env_seed = int(env_ss.generate_state(1)[0])
    return env_seed, np.random.default_rng(policy_ss), np.random.default_rng(noise_ss)


def run_episode(policy: Callable, env: Env, spec: PerturbationSpec | None, master_seed: int, episode: int,
                discount: float = 1.0) -> float:
    env_seed, policy_rng, noise_rng = episode_streams(master_seed, episode)
    kind = None if spec is None else spec.kind
    level = 0.0 if spec is None else spec.level
    env.reset_physics()
    if kind == "environment":
        scales = perturb_physics({k: 1.0 for k in env.perturbable}, level, noise_rng)
        env.apply_physics_scale(scales)
    obs = env.reset(seed=env_seed)
    total, weight = 0.0, 1.0
    while True:
        seen = perturb_observation(obs, level, noise_rng) if kind == "observation" else obs
        action = policy(seen, policy_rng)
        if kind == "action":
            action = perturb_action(action, level, env.action_space, noise_rng)
        result = env.step(action)
        total += weight * result.reward
        weight *= discount
        if result.done:
            return total
        obs = result.observation


def evaluate_policy(policy: Callable, env: Env, spec: PerturbationSpec | None, episodes: int = 100,
                    master_seed: int = 0, discount: float = 1.0) -> EvalReport:
    """Mean return, standard error and 95% CI over ``episodes`` seeded episodes.

    ``spec=None`` is the unperturbed evaluation.  Returns are discounted by
    ``discount`` (1.0: plain episode sums).  Physics are restored to nominal
    afterwards.
    """
    if episodes < 2:
        raise ValueError("need at least two episodes for a standard error")
    if not 0 < discount <= 1:
        raise ValueError("discount must lie in (0, 1]")
    returns = []
    try:
        for i in range(episodes):
            try:
                returns.append(run_episode(policy, env, spec, master_seed, i, discount))
            except Exception as exc:
                raise EvaluationError(f"episode failed: {exc!r}", i, master_seed) from exc
    finally:
        env.reset_physics()
    return EvalReport.from_returns(spec or PerturbationSpec.nominal(), returns, master_seed)


def sweep(policy: Callable, env: Env, levels: dict, episodes: int = 100, master_seed: int = 0,
          discount: float = 1.0) -> list[EvalReport]:
    """One report per (kind, level), kinds in the given order."""
    if not levels:
        raise ValueError("no perturbation kinds to sweep")
    reports = []
    for kind, lv in levels.items():
        if len(lv) == 0:
            raise ValueError(f"empty level list for {kind!r}")
        for level in lv:
            reports.append(evaluate_policy(policy, env, PerturbationSpec(kind, level), episodes, master_seed, discount))
    return reports


def format_number(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_sweep_csv(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for rep in reports:
            row = rep.csv_row()
            writer.writerow([format_number(row[c]) for c in SWEEP_COLUMNS])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for c in SWEEP_COLUMNS[1:6]:
            row[c] = float(row[c])
        row["episodes"] = int(row["episodes"])
        row["seed"] = int(row["seed"])
    return rows
