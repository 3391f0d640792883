"""Sample-based robust targets, the dual loss and advantage estimation."""

from __future__ import annotations

import numpy as np


def _as_branches(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[1] < 1:
        raise ValueError("need at least one branch value per step")
    if not np.all(np.isfinite(v)):
        raise ValueError("branch values must be finite")
    return v


def branch_soft_min(branch_values, beta) -> np.ndarray:
    """-beta * log mean_j exp(-V_j / beta), one entry per row, shift-stabilized."""
    v = _as_branches(branch_values)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (v.shape[0],))
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    m = v.min(axis=1)
    u = (v - m[:, None]) / beta[:, None]
    return m - beta * np.log(np.mean(np.exp(-u), axis=1))


def dual_objective_samples(branch_values, beta, epsilon: float) -> np.ndarray:
    """Per-step dual objective with the nominal expectation replaced by the branch mean."""
    beta = np.asarray(beta, dtype=float)
    return branch_soft_min(branch_values, beta) - beta * epsilon


def dual_objective_beta_grad(branch_values, beta, epsilon: float) -> np.ndarray:
    """d/d beta of ``dual_objective_samples``: -log mean exp(-u/beta) - E_w[u]/beta - eps.

    u = V - min V and w are the tilted weights exp(-u/beta) / sum.
    """
    v = _as_branches(branch_values)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (v.shape[0],))
    u = v - v.min(axis=1, keepdims=True)
    e = np.exp(-u / beta[:, None])
    mean_e = e.mean(axis=1)
    w = e / e.sum(axis=1, keepdims=True)
    return -np.log(mean_e) - np.sum(w * u, axis=1) / beta - epsilon


def robust_target(value_fn, next_branches, beta, epsilon: float, rewards, dones, gamma: float) -> np.ndarray:
    """r + gamma (1 - done) [-beta log mean_j exp(-V(s'_j)/beta) - beta eps].

    ``value_fn`` maps an array of branch observations (T, n, ...) to values
    (T, n); pass ``None`` when ``next_branches`` already holds values.  With
    eps = 0 the branch mean is used directly (the dual optimum sits at
    beta -> infinity, where the soft-min becomes the mean).
    """
    vals = next_branches if value_fn is None else value_fn(next_branches)
    vals = _as_branches(vals)
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if rewards.shape != (vals.shape[0],) or dones.shape != rewards.shape:
        raise ValueError("rewards, dones and branch values must align per step")
    if epsilon == 0:
        nxt = vals.mean(axis=1)
    else:
        nxt = dual_objective_samples(vals, beta, epsilon)
    return rewards + gamma * (1.0 - dones) * nxt


def robust_advantages(targets, values, ends, gamma: float, lam: float) -> np.ndarray:
    """GAE with robust TD errors delta_t = target_t - V(s_t); ``ends`` cuts the trace at episode boundaries."""
    deltas = np.asarray(targets, dtype=float) - np.asarray(values, dtype=float)
    ends = np.asarray(ends, dtype=bool)
    adv = np.zeros_like(deltas)
    running = 0.0
    for t in reversed(range(deltas.size)):
        if ends[t]:
            running = 0.0
        running = deltas[t] + gamma * lam * running
        adv[t] = running
    return adv


def normalize(x: np.ndarray) -> np.ndarray:
    # a lone sample has no spread to normalise by; keep its sign
    if x.size < 2:
        return np.array(x, dtype=float)
    return (x - x.mean()) / (x.std() + 1e-8)
