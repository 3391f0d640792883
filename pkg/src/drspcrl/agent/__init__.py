"""Robust actor-critic and tabular trainers driven by the budget curriculum."""

from .actor_critic import ActorCriticTrainer
from .config import METRIC_COLUMNS, TrainConfig, TrainingDivergence
from .policies import MlpPolicy, TabularPolicy, policy_from_dict
from .tabular import TabularTrainer

TRAINERS = {"tabular": TabularTrainer, "actor_critic": ActorCriticTrainer}


def make_trainer(env, config: TrainConfig, scheduler, seed: int):
    return TRAINERS[config.kind](env, config, scheduler, seed)


def trainer_from_dict(d: dict, env):
    return TRAINERS[d["kind"]].from_dict(d, env)

__all__ = [
    "ActorCriticTrainer", "METRIC_COLUMNS", "MlpPolicy", "TRAINERS", "TabularPolicy", "TabularTrainer",
    "TrainConfig", "TrainingDivergence", "make_trainer", "policy_from_dict", "trainer_from_dict",
]
