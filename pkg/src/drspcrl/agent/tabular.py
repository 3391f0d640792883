"""Softmax policy gradient on the exactly solvable chain, no function approximation.

Each iteration samples ``rollout_steps`` transitions for the state/action
visitation, then scores them with the exact robust critic at the current
budget: robust Q and V come from tabular robust policy evaluation, and the
beta estimate is the exact dual optimum averaged over the visited pairs.
"""

from __future__ import annotations

import numpy as np

from ..robust_core import DualSolverConfig, solve_dual_batch
from ..tabular_mdp import robust_policy_evaluation
from .base import TrainerBase
from .config import finite_or_raise
from .objectives import normalize
from .policies import TabularPolicy, softmax_table


class TabularTrainer(TrainerBase):
    kind = "tabular"

    def __init__(self, env, config, scheduler, seed: int):
        if not hasattr(env, "tabular_model"):
            raise ValueError(f"environment {env.name!r} has no exact tabular model")
        super().__init__(env, config, scheduler, seed)
        self.mdp = env.tabular_model(config.gamma)
        self.logits = np.zeros((self.mdp.n_states, self.mdp.n_actions))
        self.values = np.zeros(self.mdp.n_states)
        # At eps = 0 the dual optimum is beta -> infinity; the search interval's
        # upper end is the finite stand-in the curriculum sees.
        self.dual_config = DualSolverConfig(beta_max=config.beta_max)
        self.start = int(np.argmax(env.start_distribution()))

    @property
    def table(self) -> np.ndarray:
        return softmax_table(self.logits)

    def policy(self, deterministic: bool = False) -> TabularPolicy:
        return TabularPolicy(self.logits[: self.env.n_cells], deterministic)

    def robust_values(self, epsilon: float) -> np.ndarray:
        return robust_policy_evaluation(
            self.mdp, self.table, epsilon, tol=self.config.eval_tol, initial_values=self.values,
            method="newton", dual_config=self.dual_config,
        )

    def exact_pairs(self, values, states, actions, epsilon: float):
        """Robust next-state expectation and beta* for each visited (s, a)."""
        rows = self.mdp.kernel[states, actions]
        expect, beta = solve_dual_batch(np.broadcast_to(values, rows.shape), rows, epsilon, self.dual_config)
        return expect, np.minimum(beta, self.config.beta_max)

    def collect(self):
        pol = self.policy()
        states = np.empty(self.config.rollout_steps, dtype=int)
        actions = np.empty(self.config.rollout_steps, dtype=int)
        finished: list[float] = []
        for k in range(self.config.rollout_steps):
            states[k] = self.env.state_index()
            actions[k] = pol(self.obs, self.rngs["action"])
            self._advance_env(self.env.step(int(actions[k])), finished)
        return states, actions, finished

    def train_iteration(self) -> dict:
        eps = self.scheduler.epsilon
        states, actions, finished = self.collect()
        self.values = self.robust_values(eps)
        expect, beta = self.exact_pairs(self.values, states, actions, eps)
        q = self.mdp.rewards[states, actions] + self.mdp.gamma * expect
        adv = normalize(q - self.values[states])

        pi = self.table
        grad = np.zeros_like(self.logits)
        np.add.at(grad, (states, actions), adv)
        np.add.at(grad, states, -adv[:, None] * pi[states])
        self.logits += self.config.tabular_lr * grad / states.size

        policy_loss = finite_or_raise("policy_loss", float(-np.mean(adv * np.log(pi[states, actions]))), iteration=self.iteration)
        dual_loss = finite_or_raise("dual_loss", float(-np.mean(expect)), iteration=self.iteration)
        beta_hat = float(np.mean(beta))
        robust_value = float(self.values[self.start])
        row = self._row(eps, self._mean_return(finished), robust_value, beta_hat, policy_loss, dual_loss)
        self._visited = (states, actions)
        self._curriculum_step(beta_hat, robust_value)
        return row

    def _regret_score_fn(self, beta_estimate: float):
        states, actions = self._visited

        def score(eps: float) -> float:
            values = self.robust_values(eps)
            return float(np.mean(self.exact_pairs(values, states, actions, eps)[1]))

        return score

    def _model_state(self) -> dict:
        return {"logits": self.logits.tolist(), "values": self.values.tolist()}

    def _load_model_state(self, d: dict) -> None:
        self.logits = np.asarray(d["logits"], dtype=float)
        self.values = np.asarray(d["values"], dtype=float)
