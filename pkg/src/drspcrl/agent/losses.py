"""Loss functions with their exact parameter gradients.

Each returns ``(loss, grads)`` for one minibatch, so the finite-difference
tests can probe the very function the trainer descends.
"""

from __future__ import annotations

import numpy as np

from .networks import (
    MlpSpec,
    categorical_log_prob,
    categorical_log_prob_grads,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    log_softmax,
    mlp_forward,
    mlp_gradients,
)
from .objectives import dual_objective_beta_grad, dual_objective_samples


def policy_log_prob(spec: MlpSpec, params, log_std, obs, actions) -> np.ndarray:
    out = mlp_forward(spec, params, obs)
    if log_std is None:
        return categorical_log_prob(out, actions)
    return gaussian_log_prob(out, log_std, actions)


def log_prob_grads(spec: MlpSpec, params, log_std, obs, actions, upstream):
    """Gradient of sum_i upstream_i * log pi(a_i | s_i): (param grads, log_std grad or None)."""
    out = mlp_forward(spec, params, obs)
    upstream = np.asarray(upstream, dtype=float)
    if log_std is None:
        g_out = upstream[:, None] * categorical_log_prob_grads(out, actions)
        return mlp_gradients(spec, params, obs, g_out), None
    g_mean, g_log_std = gaussian_log_prob_grads(out, log_std, actions)
    grads = mlp_gradients(spec, params, obs, upstream[:, None] * g_mean)
    return grads, np.sum(upstream[:, None] * g_log_std, axis=0)


def clipped_surrogate_loss(spec: MlpSpec, params, log_std, obs, actions, old_log_prob, advantages, clip: float,
                           entropy_coef: float = 0.0):
    """-mean(min(r A, clip(r) A)) - entropy_coef * mean entropy."""
    out = mlp_forward(spec, params, obs)
    B = out.shape[0]
    logp = categorical_log_prob(out, actions) if log_std is None else gaussian_log_prob(out, log_std, actions)
    ratio = np.exp(logp - old_log_prob)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    loss = -float(np.mean(np.minimum(unclipped, clipped)))
    active = unclipped <= clipped  # the min picks the unclipped branch, which carries the gradient
    dlogp = -np.where(active, unclipped, 0.0) / B
    grads, g_log_std = log_prob_grads(spec, params, log_std, obs, actions, dlogp)
    if entropy_coef > 0:
        if log_std is None:
            lp = log_softmax(out)
            p = np.exp(lp)
            ent = -np.sum(p * lp, axis=1)
            loss -= entropy_coef * float(ent.mean())
            g_out = entropy_coef * p * (lp + ent[:, None]) / B
            grads = [g + e for g, e in zip(grads, mlp_gradients(spec, params, obs, g_out))]
        else:
            loss -= entropy_coef * float(np.sum(log_std + 0.5 * (np.log(2 * np.pi) + 1.0)))
            g_log_std = g_log_std - entropy_coef
    return loss, grads, g_log_std


def value_loss(spec: MlpSpec, params, obs, returns, old_values, clip: float, clip_value_loss: bool = True):
    """0.5 * mean of the (optionally clipped) squared error against ``returns``."""
    v = mlp_forward(spec, params, obs)[:, 0]
    B = v.size
    err = v - returns
    if not clip_value_loss:
        return 0.5 * float(np.mean(err**2)), mlp_gradients(spec, params, obs, (err / B)[:, None])
    delta = v - old_values
    v_clipped = old_values + np.clip(delta, -clip, clip)
    err_c = v_clipped - returns
    use_clipped = err_c**2 > err**2
    loss = 0.5 * float(np.mean(np.maximum(err**2, err_c**2)))
    inside = np.abs(delta) < clip
    g = np.where(use_clipped, err_c * inside, err) / B
    return loss, mlp_gradients(spec, params, obs, g[:, None])


def dual_loss(spec: MlpSpec, params, inputs, branch_values, epsilon: float):
    """-(1/B) sum of the sampled dual objective at beta_phi(s, a)."""
    beta = mlp_forward(spec, params, inputs)[:, 0]
    B = beta.size
    loss = -float(np.mean(dual_objective_samples(branch_values, beta, epsilon)))
    g_beta = -dual_objective_beta_grad(branch_values, beta, epsilon) / B
    return loss, mlp_gradients(spec, params, inputs, g_beta[:, None])
