"""Exact finite robust MDPs: robust Bellman backups, value iteration, policy evaluation.

Uncertainty is (s,a)-rectangular: every kernel row may move anywhere inside a
KL ball of radius ``epsilon`` around its nominal row, independently.

MDP documents are JSON objects::

    {
      "format": "drspcrl.tabular_mdp/1",
      "n_states": 3, "n_actions": 2, "gamma": 0.9,
      "rewards": [[r(0,0), r(0,1)], ...],                 # n_states x n_actions
      "kernel":  [[[P(0|0,0), P(1|0,0), ...], ...], ...]  # n_states x n_actions x n_states
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .robust_core import DualSolverConfig, ValueSupport, brute_force_inner_min, solve_dual_batch

FORMAT_TAG = "drspcrl.tabular_mdp/1"

# (values over next states, nominal kernel rows (B, S), epsilon) -> robust expectations (B,)
InnerSolver = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass
class TabularMdp:
    rewards: np.ndarray  # (S, A)
    kernel: np.ndarray  # (S, A, S)
    gamma: float

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.kernel = np.asarray(self.kernel, dtype=float)
        S, A = self.rewards.shape
        if self.kernel.shape != (S, A, S):
            raise ValueError(f"kernel shape {self.kernel.shape} does not match rewards {self.rewards.shape}")
        if np.any(self.kernel < 0) or np.max(np.abs(self.kernel.sum(axis=2) - 1.0)) > 1e-9:
            raise ValueError("kernel rows must be probability distributions")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "rewards": self.rewards.tolist(),
            "kernel": self.kernel.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        if doc.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported MDP document format {doc.get('format')!r}")
        mdp = cls(doc["rewards"], doc["kernel"], float(doc["gamma"]))
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise ValueError("declared sizes do not match tables")
        return mdp

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RobustSolution:
    values: np.ndarray
    q_values: np.ndarray
    policy: np.ndarray
    epsilon: float
    iterations: int
    residual: float


def dual_inner(config: DualSolverConfig | None = None) -> InnerSolver:
    def inner(values, rows, epsilon):
        v = np.broadcast_to(values, rows.shape)
        return solve_dual_batch(v, rows, epsilon, config)[0]

    return inner


def oracle_inner(grid_step: float = 1e-3) -> InnerSolver:
    """Inner minimisation by simplex-grid enumeration (verification only)."""

    def inner(values, rows, epsilon):
        out = np.empty(rows.shape[0])
        for i, row in enumerate(rows):
            keep = row > 0
            out[i] = brute_force_inner_min(ValueSupport(values[keep], row[keep]), epsilon, grid_step)
        return out

    return inner


def robust_q(mdp: TabularMdp, values: np.ndarray, epsilon: float, inner: InnerSolver | None = None) -> np.ndarray:
    """Q(s,a) = r(s,a) + gamma * inf_{P in ball} E_P[V]."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mdp.n_states,):
        raise ValueError(f"expected {mdp.n_states} values, got shape {values.shape}")
    rows = mdp.kernel.reshape(-1, mdp.n_states)
    if epsilon == 0:
        expect = rows @ values
    else:
        expect = (inner or dual_inner())(values, rows, epsilon)
    return mdp.rewards + mdp.gamma * expect.reshape(mdp.n_states, mdp.n_actions)


def robust_bellman_backup(
    mdp: TabularMdp, values, epsilon: float, inner: InnerSolver | None = None
) -> tuple[np.ndarray, np.ndarray]:
    q = robust_q(mdp, values, epsilon, inner)
    return q.max(axis=1), q


def greedy_policy(q: np.ndarray) -> np.ndarray:
    # argmax returns the first maximiser: ties go to the lowest action index
    return np.argmax(q, axis=1)


def _stop_threshold(tol: float, gamma: float) -> float:
    # a sweep change below tol*(1-gamma)/gamma puts V within tol of the fixed point
    return tol * (1.0 - gamma) / gamma if gamma > 0 else tol


def robust_value_iteration(
    mdp: TabularMdp,
    epsilon: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    inner: InnerSolver | None = None,
) -> RobustSolution:
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(mdp.n_states)
    residual = np.inf
    stop = _stop_threshold(tol, mdp.gamma)
    for it in range(1, max_iter + 1):
        v_new, q = robust_bellman_backup(mdp, v, epsilon, inner)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= stop:
            return RobustSolution(v, q, greedy_policy(q), epsilon, it, residual)
    raise ConvergenceError("robust value iteration did not converge", residual, max_iter)


def policy_table(policy, n_states: int, n_actions: int) -> np.ndarray:
    """Normalise a deterministic (S,) or stochastic (S, A) policy to an (S, A) table."""
    pol = np.asarray(policy)
    if pol.ndim == 1:
        if pol.shape != (n_states,) or np.any(pol < 0) or np.any(pol >= n_actions):
            raise ValueError("deterministic policy must give one valid action per state")
        table = np.zeros((n_states, n_actions))
        table[np.arange(n_states), pol.astype(int)] = 1.0
        return table
    pol = pol.astype(float)
    if pol.shape != (n_states, n_actions):
        raise ValueError(f"policy table must be {n_states}x{n_actions}")
    if np.any(pol < 0) or np.max(np.abs(pol.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("policy rows must be probability distributions")
    return pol


def robust_policy_evaluation(
    mdp: TabularMdp,
    policy,
    epsilon: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    initial_values=None,
    inner: InnerSolver | None = None,
    method: str = "sweep",
    dual_config: DualSolverConfig | None = None,
) -> np.ndarray:
    """Worst-case value of a fixed policy: V = sum_a pi(a|s) [r + gamma inf_P E_P V].

    ``method="sweep"`` iterates the robust evaluation operator to its fixed
    point.  ``method="newton"`` alternates between evaluating the current
    worst-case kernel exactly (a linear solve) and re-tilting the kernel
    against the new values, i.e. policy iteration for the adversary; it
    reaches the same fixed point in a handful of rounds.
    """
    pi = policy_table(policy, mdp.n_states, mdp.n_actions)
    if epsilon == 0:
        # nominal case is linear: solve it directly
        r_pi = np.sum(pi * mdp.rewards, axis=1)
        p_pi = np.einsum("sa,sat->st", pi, mdp.kernel)
        return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
    v = np.zeros(mdp.n_states) if initial_values is None else np.array(initial_values, dtype=float)
    if method == "newton":
        return _adversary_policy_iteration(mdp, pi, epsilon, v, tol, max_iter, dual_config)
    if method != "sweep":
        raise ValueError(f"unknown evaluation method {method!r}")
    residual = np.inf
    stop = _stop_threshold(tol, mdp.gamma)
    for it in range(1, max_iter + 1):
        q = robust_q(mdp, v, epsilon, inner)
        v_new = np.sum(pi * q, axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= stop:
            return v
    raise ConvergenceError("robust policy evaluation did not converge", residual, max_iter)


def nominal_value_iteration(mdp: TabularMdp, tol: float = 1e-8, max_iter: int = 10_000) -> RobustSolution:
    return robust_value_iteration(mdp, 0.0, tol, max_iter)


def _adversary_policy_iteration(mdp, pi, epsilon, v, tol, max_iter, dual_config):
    # Newton on V = T(V).  The worst-case kernel is the derivative of the
    # robust expectation in V, so (I - gamma P*) is the Jacobian of V - T(V);
    # an inexact kernel only slows convergence, the fixed point is set by T.
    S = mdp.n_states
    rows = mdp.kernel.reshape(-1, S)
    stop = _stop_threshold(tol, mdp.gamma)
    residual = np.inf
    for it in range(1, max_iter + 1):
        expect, _, worst = solve_dual_batch(np.broadcast_to(v, rows.shape), rows, epsilon, dual_config, True)
        q = mdp.rewards + mdp.gamma * expect.reshape(S, mdp.n_actions)
        diff = np.sum(pi * q, axis=1) - v
        residual = float(np.max(np.abs(diff)))
        if residual <= stop:
            return v + diff
        p_pi = np.einsum("sa,sat->st", pi, worst.reshape(S, mdp.n_actions, S))
        v = v + np.linalg.solve(np.eye(S) - mdp.gamma * p_pi, diff)
    raise ConvergenceError("robust policy evaluation did not converge", residual, max_iter)
