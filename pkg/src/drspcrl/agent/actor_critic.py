"""On-policy clipped-surrogate actor-critic with robust targets and a dual network.

One iteration: collect N steps (with n branch next-states per step) ->
K dual updates -> robust TD targets and GAE -> clipped-surrogate policy and
critic epochs -> mean beta_phi over the batch -> curriculum step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..environments import Discrete
from .base import TrainerBase
from .config import finite_or_raise
from .losses import clipped_surrogate_loss, dual_loss, policy_log_prob, value_loss
from .networks import Adam, MlpSpec, clip_by_global_norm, init_params, mlp_forward, params_from_lists, params_to_lists
from .objectives import normalize, robust_advantages, robust_target
from .policies import MlpPolicy


@dataclass
class RolloutBatch:
    observations: np.ndarray  # (T, obs_dim)
    actions: np.ndarray  # raw sampled actions: (T,) ints or (T, act_dim)
    dual_inputs: np.ndarray  # (T, obs_dim + action encoding)
    rewards: np.ndarray
    terminals: np.ndarray  # no bootstrap
    ends: np.ndarray  # episode boundary (terminal or time limit)
    branch_observations: np.ndarray  # (T, n, obs_dim)
    log_probs: np.ndarray

    def __post_init__(self):
        T = self.rewards.shape[0]
        for name in ("observations", "actions", "dual_inputs", "terminals", "ends", "branch_observations", "log_probs"):
            if getattr(self, name).shape[0] != T:
                raise ValueError(f"{name} is not aligned with rewards")
        if self.branch_observations.ndim != 3 or self.branch_observations.shape[1] < 1:
            raise ValueError("every step needs at least one branch next-state")

    def __len__(self) -> int:
        return self.rewards.shape[0]


def minibatch_partition(T: int, minibatches: int, rng: np.random.Generator) -> list[np.ndarray]:
    return np.array_split(rng.permutation(T), minibatches)


def dual_update(spec: MlpSpec, params, optimizer: Adam, inputs, branch_values, epsilon: float, K: int, partition) -> float:
    """K Adam steps on the dual loss, cycling through ``partition``; returns the full-batch loss after."""
    if K < 1:
        raise ValueError("K must be at least 1")
    for k in range(K):
        idx = partition[k % len(partition)]
        loss, grads = dual_loss(spec, params, inputs[idx], branch_values[idx], epsilon)
        finite_or_raise("dual_loss", loss, step=k, epsilon=epsilon)
        optimizer.step(params, grads)
    return dual_loss(spec, params, inputs, branch_values, epsilon)[0]


def estimate_beta_star(spec: MlpSpec, params, inputs) -> float:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] == 0:
        raise ValueError("cannot estimate beta from an empty batch")
    return float(np.mean(mlp_forward(spec, params, inputs)[:, 0]))


class ActorCriticTrainer(TrainerBase):
    kind = "actor_critic"

    def __init__(self, env, config, scheduler, seed: int):
        super().__init__(env, config, scheduler, seed)
        space = env.action_space
        self.discrete = isinstance(space, Discrete)
        self.act_dim = space.n if self.discrete else space.shape[0]
        self.n_branches = config.branch_samples or (8 if env.stochastic else 1)
        obs_dim = env.obs_dim
        self.policy_spec = MlpSpec(obs_dim, self.act_dim, config.hidden_dims)
        self.critic_spec = MlpSpec(obs_dim, 1, config.hidden_dims)
        self.dual_spec = MlpSpec(obs_dim + self.act_dim, 1, config.dual_hidden_dims, output="softplus",
                                 beta_floor=config.beta_floor)
        rng = self.rngs["shuffle"]
        self.policy_params = init_params(self.policy_spec, rng, output_scale=0.01)
        self.critic_params = init_params(self.critic_spec, rng)
        self.dual_params = init_params(self.dual_spec, rng)
        self.log_std = None if self.discrete else np.full(self.act_dim, config.log_std_init)
        self.optimizer = Adam(config.policy_lr)
        self.dual_optimizer = Adam(config.dual_lr)

    # -- acting ---------------------------------------------------------------

    def policy(self, deterministic: bool = False) -> MlpPolicy:
        space = self.env.action_space
        low, high = (None, None) if self.discrete else (space.low, space.high)
        return MlpPolicy(self.policy_spec, [p.copy() for p in self.policy_params],
                         None if self.log_std is None else self.log_std.copy(), low, high, deterministic)

    def encode_actions(self, executed) -> np.ndarray:
        if self.discrete:
            return np.eye(self.act_dim)[np.asarray(executed, dtype=int)]
        return np.asarray(executed, dtype=float).reshape(-1, self.act_dim) / self.env.action_space.high

    def collect(self) -> tuple[RolloutBatch, list]:
        N, n = self.config.rollout_steps, self.n_branches
        pol = self.policy()
        obs, raw, executed, rewards, terminals, ends, branches = [], [], [], [], [], [], []
        finished: list[float] = []
        for _ in range(N):
            o = np.asarray(self.obs, dtype=float)
            a_raw = pol.sample(o, self.rngs["action"])
            a = pol.execute(a_raw)
            if n > 1:
                snap = self.env.snapshot()
                draws = self.env.branch_sample(snap, a, n, self.rngs["branch"])
                branch_obs = [d.observation for d in draws]
            res = self.env.step(a)
            if n == 1:
                branch_obs = [res.observation]
            obs.append(o)
            raw.append(a_raw)
            executed.append(a)
            rewards.append(res.reward)
            terminals.append(res.done and not res.truncated)
            ends.append(res.done)
            branches.append(branch_obs)
            self._advance_env(res, finished)
        obs = np.array(obs)
        actions = np.array(raw, dtype=int if self.discrete else float)
        batch = RolloutBatch(
            observations=obs,
            actions=actions,
            dual_inputs=np.concatenate([obs, self.encode_actions(executed)], axis=1),
            rewards=np.array(rewards),
            terminals=np.array(terminals),
            ends=np.array(ends),
            branch_observations=np.array(branches),
            log_probs=policy_log_prob(self.policy_spec, self.policy_params, self.log_std, obs, actions),
        )
        return batch, finished

    def critic(self, obs) -> np.ndarray:
        return mlp_forward(self.critic_spec, self.critic_params, obs)[:, 0]

    # -- one iteration --------------------------------------------------------

    def train_iteration(self) -> dict:
        cfg = self.config
        eps = self.scheduler.epsilon
        batch, finished = self.collect()
        T, n, d = batch.branch_observations.shape
        values = self.critic(batch.observations)
        branch_values = self.critic(batch.branch_observations.reshape(T * n, d)).reshape(T, n)
        finite_or_raise("critic_values", float(np.sum(values) + np.sum(branch_values)), iteration=self.iteration)
        live = ~batch.terminals
        partition = minibatch_partition(T, cfg.minibatches, self.rngs["shuffle"])

        live_idx = np.flatnonzero(live)
        dual_l = float("nan")
        if live_idx.size:
            live_partition = [p[live[p]] for p in partition]
            live_partition = [np.searchsorted(live_idx, p) for p in live_partition if p.size]
            dual_l = dual_update(self.dual_spec, self.dual_params, self.dual_optimizer, batch.dual_inputs[live_idx],
                                 branch_values[live_idx], eps, cfg.dual_updates, live_partition)

        beta = mlp_forward(self.dual_spec, self.dual_params, batch.dual_inputs)[:, 0]
        targets = robust_target(None, branch_values, beta, eps, batch.rewards, batch.terminals, cfg.gamma)
        adv = robust_advantages(targets, values, batch.ends, cfg.gamma, cfg.gae_lambda)
        returns = adv + values
        policy_l = self.policy_update(batch, adv, returns, values, partition)

        beta_hat = estimate_beta_star(self.dual_spec, self.dual_params, batch.dual_inputs[live_idx]) if live_idx.size else cfg.beta_floor
        beta_hat = min(beta_hat, cfg.beta_max)
        robust_value = float(np.mean(targets))
        row = self._row(eps, self._mean_return(finished), robust_value, beta_hat, policy_l, dual_l)
        self._last_beta = beta_hat
        self._curriculum_step(beta_hat, robust_value)
        return row

    def policy_update(self, batch: RolloutBatch, adv, returns, old_values, partition) -> float:
        cfg = self.config
        losses = []
        for epoch in range(cfg.epochs):
            if epoch:
                partition = minibatch_partition(len(batch), cfg.minibatches, self.rngs["shuffle"])
            for idx in partition:
                a = normalize(adv[idx]) if cfg.normalize_advantages else adv[idx]
                obs = batch.observations[idx]
                pl, pg, g_log_std = clipped_surrogate_loss(self.policy_spec, self.policy_params, self.log_std, obs,
                                                           batch.actions[idx], batch.log_probs[idx], a, cfg.clip,
                                                           cfg.entropy_coef)
                vl, vg = value_loss(self.critic_spec, self.critic_params, obs, returns[idx], old_values[idx], cfg.clip,
                                    cfg.clip_value_loss)
                finite_or_raise("policy_loss", pl + cfg.value_coef * vl, iteration=self.iteration, epoch=epoch)
                grads = pg + ([] if g_log_std is None else [g_log_std]) + [cfg.value_coef * g for g in vg]
                grads, _ = clip_by_global_norm(grads, cfg.max_grad_norm)
                params = self.policy_params + ([] if self.log_std is None else [self.log_std]) + self.critic_params
                self.optimizer.step(params, grads)
                losses.append(pl)
        return float(np.mean(losses))

    def _regret_score_fn(self, beta_estimate: float):
        # beta_phi is not conditioned on the budget, so the freshest estimate scores every candidate
        return lambda eps: beta_estimate

    # -- checkpoints ----------------------------------------------------------

    def _model_state(self) -> dict:
        return {
            "policy": params_to_lists(self.policy_params),
            "log_std": None if self.log_std is None else self.log_std.tolist(),
            "critic": params_to_lists(self.critic_params),
            "dual": params_to_lists(self.dual_params),
            "optimizer": self.optimizer.to_dict(),
            "dual_optimizer": self.dual_optimizer.to_dict(),
        }

    def _load_model_state(self, d: dict) -> None:
        self.policy_params = params_from_lists(d["policy"])
        self.log_std = None if d["log_std"] is None else np.asarray(d["log_std"], dtype=float)
        self.critic_params = params_from_lists(d["critic"])
        self.dual_params = params_from_lists(d["dual"])
        self.optimizer = Adam.from_dict(d["optimizer"])
        self.dual_optimizer = Adam.from_dict(d["dual_optimizer"])
