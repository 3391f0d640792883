"""Experiment configuration: one YAML file with nested sections.

Unknown keys are rejected everywhere.  ``ExperimentConfig.from_dict(cfg.to_dict())``
is the identity, and so is a YAML round trip.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..agent.config import TrainConfig
from ..curriculum import VARIANTS, CurriculumState, validate_scheduler, variant_name
from ..environments import ENVIRONMENTS
from ..eval_harness import DEFAULT_LEVELS, PERTURBATION_KINDS, PerturbationSpec

SECTIONS = ("environment", "agent", "curriculum", "scheduler", "evaluation", "output_dir", "seed")


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


def _strict(section: str, d, allowed) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return dict(d)


@dataclass
class EnvironmentConfig:
    name: str = "chain"
    params: dict = field(default_factory=dict)

    def build(self, seed: int = 0):
        return ENVIRONMENTS[self.name](**self.params, seed=seed)


@dataclass
class CurriculumConfig:
    epsilon_budget: float = 1.0
    alpha: float = 0.5
    lambda_curr: float = 0.01
    epsilon_start: float = 0.0

    def initial_state(self) -> CurriculumState:
        return CurriculumState(epsilon_t=self.epsilon_start, epsilon_budget=self.epsilon_budget, alpha=self.alpha,
                               lambda_curr=self.lambda_curr, epsilon_start=self.epsilon_start)


@dataclass
class EvaluationConfig:
    episodes: int = 100
    seed: int = 12345
    discount: float = 1.0
    deterministic: bool = False
    chart: bool = True
    levels: dict = field(default_factory=lambda: {k: list(DEFAULT_LEVELS) for k in PERTURBATION_KINDS})


@dataclass
class ExperimentConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    agent: TrainConfig = field(default_factory=TrainConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    scheduler: object = field(default_factory=lambda: VARIANTS["drspcrl"]())
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    # -- parsing --------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = _strict("config", d, SECTIONS)
        try:
            env_d = _strict("environment", d.get("environment"), ("name", "params"))
            env = EnvironmentConfig(env_d.get("name", "chain"), dict(env_d.get("params") or {}))
            if env.name not in ENVIRONMENTS:
                raise ConfigError(f"unknown environment {env.name!r}; choose from {sorted(ENVIRONMENTS)}")
            env.build()  # parameter names and ranges

            agent_d = _strict("agent", d.get("agent"), [f.name for f in fields(TrainConfig)])
            agent = TrainConfig(**agent_d)

            cur_d = _strict("curriculum", d.get("curriculum"), [f.name for f in fields(CurriculumConfig)])
            cur = CurriculumConfig(**{k: float(v) for k, v in cur_d.items()})
            cur.initial_state()

            sched_d = dict(d.get("scheduler") or {"variant": "drspcrl"})
            variant = sched_d.pop("variant", "drspcrl")
            if variant not in VARIANTS:
                raise ConfigError(f"unknown scheduler variant {variant!r}; choose from {sorted(VARIANTS)}")
            sched_cls = VARIANTS[variant]
            _strict(f"scheduler ({variant})", sched_d, [f.name for f in fields(sched_cls)])
            scheduler = sched_cls(**sched_d)
            validate_scheduler(scheduler)

            ev_d = _strict("evaluation", d.get("evaluation"), [f.name for f in fields(EvaluationConfig)])
            evaluation = EvaluationConfig(**ev_d)
            _check_evaluation(evaluation)

            seed = d.get("seed", 0)
            if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
                raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
            output_dir = str(d.get("output_dir", "runs/default"))
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(env, agent, cur, scheduler, evaluation, output_dir, seed)

    def to_dict(self) -> dict:
        sched = {"variant": variant_name(self.scheduler), **asdict(self.scheduler)}
        return {
            "environment": {"name": self.environment.name, "params": dict(self.environment.params)},
            "agent": self.agent.to_dict(),
            "curriculum": asdict(self.curriculum),
            "scheduler": sched,
            "evaluation": {**asdict(self.evaluation), "levels": {k: list(v) for k, v in self.evaluation.levels.items()}},
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a YAML mapping")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_yaml(p.read_text())

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _check_evaluation(ev: EvaluationConfig) -> None:
    if not isinstance(ev.episodes, int) or ev.episodes < 2:
        raise ConfigError("evaluation.episodes must be an integer >= 2")
    if not 0 < ev.discount <= 1:
        raise ConfigError("evaluation.discount must lie in (0, 1]")
    if not isinstance(ev.levels, dict) or not ev.levels:
        raise ConfigError("evaluation.levels must map perturbation kinds to level lists")
    for kind, levels in ev.levels.items():
        if not isinstance(levels, list) or not levels:
            raise ConfigError(f"evaluation.levels.{kind} must be a non-empty list")
        for lv in levels:
            PerturbationSpec(kind, lv)  # raises on bad kind or range
