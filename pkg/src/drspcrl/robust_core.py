"""KL-dual robust expectation over a finite next-state support.

The robust value of a single (s, a) pair is

    inf_{P : KL(P || P0) <= eps}  E_P[V]
        = sup_{beta >= 0}  -beta * log E_P0[exp(-V / beta)] - beta * eps

The sup is solved by golden-section search on log(beta); the two
degenerate cases (eps == 0, and eps large enough that a point mass on the
minimum is feasible) are handled in closed form.  ``brute_force_inner_min``
solves the primal problem on a simplex grid and exists only for checking.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

PROB_ATOL = 1e-9
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SupportError(ValueError):
    """Raised for malformed value/probability supports."""


@dataclass(frozen=True)
class ValueSupport:
    """Next-state values V(s') paired with nominal probabilities P0(s'|s,a)."""

    values: np.ndarray
    probs: np.ndarray

    def __init__(self, values, probs):
        v = np.asarray(values, dtype=float).reshape(-1)
        p = np.asarray(probs, dtype=float).reshape(-1)
        if v.size == 0 or v.shape != p.shape:
            raise SupportError(f"values/probs must be non-empty and equal length, got {v.size} and {p.size}")
        if not np.all(np.isfinite(v)):
            raise SupportError("values must be finite")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_ATOL:
            raise SupportError(f"probs must be non-negative and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.values.size

    @property
    def nominal_value(self) -> float:
        return float(self.probs @ self.values)

    @property
    def min_value(self) -> float:
        """Smallest value among outcomes with positive nominal probability."""
        return float(self.values[self.probs > 0].min())

    def min_mass(self) -> float:
        """Nominal probability of the set of minimum-value outcomes."""
        return float(self.probs[self.values <= self.min_value].sum())


@dataclass(frozen=True)
class DualSolverConfig:
    beta_min: float = 1e-6
    beta_max: float = 1e6
    tolerance: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self):
        if not (0 < self.beta_min < self.beta_max):
            raise ValueError(f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class DualSolution:
    beta_star: float
    robust_value: float
    worst_case_probs: np.ndarray
    at_boundary: bool
    iterations: int = 0
    kl: float = field(default=0.0)


def kl_divergence(p, q) -> float:
    """KL(p || q) with the 0 * log(0 / .) = 0 convention."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape:
        raise SupportError(f"length mismatch: {p.size} vs {q.size}")
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise SupportError("p puts mass where q has none")
    return max(float(np.sum(p[pos] * np.log(p[pos] / q[pos]))), 0.0)


def _log_mean_exp_neg(values: np.ndarray, probs: np.ndarray, beta: float) -> tuple[float, float]:
    """Return (m, log sum_i p_i exp(-(v_i - m)/beta)) with m = min(values)."""
    pos = probs > 0
    m = float(values[pos].min())
    z = np.exp(-(values[pos] - m) / beta)
    return m, math.log(float(probs[pos] @ z))


def dual_objective(beta: float, support: ValueSupport, epsilon: float) -> float:
    """-beta * log E_P0[exp(-V/beta)] - beta * epsilon, shifted at min(V)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    m, lse = _log_mean_exp_neg(support.values, support.probs, beta)
    return m - beta * lse - beta * epsilon


def worst_case_distribution(support: ValueSupport, beta: float) -> np.ndarray:
    """Exponentially tilted kernel p_i exp(-v_i / beta) / Z."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    v, p = support.values, support.probs
    w = np.where(p > 0, p * np.exp(-np.maximum(v - support.min_value, 0.0) / beta), 0.0)
    return w / w.sum()


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int) -> tuple[float, int]:
    """Golden-section maximisation of a unimodal f on [lo, hi]."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol and it < max_iter:
        it += 1
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    return (c if fc >= fd else d), it


def _polish_log_beta(support: ValueSupport, epsilon: float, log_beta: float, lo: float, hi: float) -> float:
    """Refine an interior optimum by solving KL(P_beta || P0) = epsilon.

    The dual derivative is KL(P_beta || P0) - epsilon, decreasing in beta, so
    the optimum is its root.  Golden section pins the value; the root pins
    the tilted distribution, which is first-order sensitive to beta.
    """

    def excess(lb):
        return kl_divergence(worst_case_distribution(support, math.exp(lb)), support.probs) - epsilon

    for width in (1e-4, 1e-1, None):
        a, b = (lo, hi) if width is None else (max(lo, log_beta - width), min(hi, log_beta + width))
        fa, fb = excess(a), excess(b)
        if fa >= 0 >= fb:
            if fa == 0 or fb == 0:
                return a if fa == 0 else b
            root = brentq(excess, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            # keep the golden-section point if the root is no better on the objective
            if dual_objective(math.exp(root), support, epsilon) >= dual_objective(math.exp(log_beta), support, epsilon) - 1e-12:
                return root
            return log_beta
    return log_beta


def solve_dual(support: ValueSupport, epsilon: float, config: DualSolverConfig | None = None) -> DualSolution:
    """Robust (worst-case) expectation of ``support`` over the KL ball of radius ``epsilon``."""
    if not isinstance(support, ValueSupport):
        raise SupportError("support must be a ValueSupport")
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon!r}")
    cfg = config or DualSolverConfig()
    v, p = support.values, support.probs

    if epsilon == 0:
        return DualSolution(cfg.beta_max, support.nominal_value, p.copy(), True)

    # point mass on the minimiser set is feasible: the inner min is min(V)
    vmin = support.min_value
    min_set = (v <= vmin) & (p > 0)
    if epsilon >= -math.log(support.min_mass()):
        wc = np.where(min_set, p, 0.0)
        wc = wc / wc.sum()
        return DualSolution(0.0, vmin, wc, True, kl=kl_divergence(wc, p))

    lo, hi = math.log(cfg.beta_min), math.log(cfg.beta_max)
    log_beta, iters = _golden_max(
        lambda lb: dual_objective(math.exp(lb), support, epsilon), lo, hi, cfg.tolerance, cfg.max_iterations
    )
    at_boundary = (log_beta - lo) <= 10 * cfg.tolerance or (hi - log_beta) <= 10 * cfg.tolerance
    if not at_boundary:
        log_beta = _polish_log_beta(support, epsilon, log_beta, lo, hi)
    beta = math.exp(log_beta)
    wc = worst_case_distribution(support, beta)
    value = dual_objective(beta, support, epsilon)
    # bounds hold analytically; clip round-off
    value = min(max(value, vmin), support.nominal_value)
    return DualSolution(beta, value, wc, at_boundary, iterations=iters, kl=kl_divergence(wc, p))


def solve_dual_batch(
    values: np.ndarray,
    probs: np.ndarray,
    epsilon: float,
    config: DualSolverConfig | None = None,
    return_worst_case: bool = False,
):
    """Row-wise ``solve_dual`` over (B, n) value/probability arrays.

    Rows may carry zero-probability entries (full kernel rows of a tabular
    MDP).  Runs the same golden-section iteration as the scalar solver, in
    lockstep across rows.  Returns ``(robust_values, beta_star)``, plus the
    (B, n) worst-case rows when ``return_worst_case`` is set.
    """
    cfg = config or DualSolverConfig()
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if v.shape != p.shape or v.ndim != 2:
        raise SupportError(f"expected matching (B, n) arrays, got {v.shape} and {p.shape}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon!r}")
    nominal = np.sum(p * v, axis=1)
    B = v.shape[0]
    if epsilon == 0:
        if return_worst_case:
            return nominal, np.full(B, float(cfg.beta_max)), p.copy()
        return nominal, np.full(B, float(cfg.beta_max))

    support = p > 0
    vmin = np.where(support, v, np.inf).min(axis=1)
    shifted = np.where(support, v - vmin[:, None], 0.0)
    min_mass = np.sum(np.where(support & (shifted <= 0), p, 0.0), axis=1)
    point_mass = epsilon >= -np.log(min_mass)

    def objective(log_beta):
        beta = np.exp(log_beta)[:, None]
        lse = np.log(np.sum(p * np.exp(-shifted / beta), axis=1))
        return vmin - beta[:, 0] * lse - beta[:, 0] * epsilon

    lo = np.full(B, math.log(cfg.beta_min))
    hi = np.full(B, math.log(cfg.beta_max))
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = objective(c), objective(d)
    it = 0
    while it < cfg.max_iterations and np.max(hi - lo) > cfg.tolerance:
        it += 1
        left = fc >= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        nc = np.where(left, hi - INV_PHI * (hi - lo), d)
        nd = np.where(left, c, lo + INV_PHI * (hi - lo))
        probe = np.where(left, nc, nd)
        fp = objective(probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = nc, nd
    log_beta = np.where(fc >= fd, c, d)
    beta = np.exp(log_beta)
    value = np.clip(objective(log_beta), vmin, nominal)
    value = np.where(point_mass, vmin, value)
    beta = np.where(point_mass, 0.0, beta)
    if not return_worst_case:
        return value, beta
    tilt = np.where(support, p * np.exp(-shifted / np.where(point_mass, 1.0, beta)[:, None]), 0.0)
    on_min = np.where(support & (shifted <= 0), p, 0.0)
    worst = np.where(point_mass[:, None], on_min, tilt)
    return value, beta, worst / worst.sum(axis=1, keepdims=True)


@functools.lru_cache(maxsize=8)
def _grid_compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to at most ``total``.

    Returned as an (N, parts) array; built recursively one coordinate at a time.
    """
    if parts == 0:
        return np.zeros((1, 0), dtype=np.int64)
    if parts == 1:
        return np.arange(total + 1, dtype=np.int64)[:, None]
    rows = []
    for k in range(total + 1):
        tail = _grid_compositions(total - k, parts - 1)
        rows.append(np.column_stack([np.full(len(tail), k, dtype=np.int64), tail]))
    out = np.concatenate(rows)
    out.setflags(write=False)  # shared through the cache
    return out


def _xlogx_over(p: np.ndarray, q: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0, p * np.log(p / q), 0.0)
    return out


def brute_force_inner_min(support: ValueSupport, epsilon: float, grid_step: float = 1e-3) -> float:
    """min E_P[V] over simplex grid points P with KL(P || P0) <= epsilon.

    The grid has resolution ``grid_step``.  The first n-2 coordinates are
    enumerated exhaustively; along the remaining one-dimensional line the
    KL is convex and the objective linear, so the best feasible grid point
    on each line sits at the end of the contiguous feasible run and is
    located by bisection over grid indices.  This gives exactly the same
    answer as scoring every grid point.  The nominal P0 is always feasible
    and is included as a candidate.
    """
    if len(support) > 4:
        raise SupportError("brute-force oracle supports at most 4 outcomes")
    if grid_step > 0.01 or grid_step <= 0:
        raise ValueError("grid_step must be in (0, 0.01]")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    keep = support.probs > 0
    v, q = support.values[keep], support.probs[keep]
    best = float(q @ v)
    n = v.size
    if n == 1:
        return float(v[0])

    K = int(round(1.0 / grid_step))
    outer = _grid_compositions(K, n - 2)  # (L, n-2)
    rest = K - outer.sum(axis=1)  # units left for the last two coordinates
    po = outer / K
    kl_outer = np.zeros(len(outer))
    val_outer = np.zeros(len(outer))
    for j in range(n - 2):
        kl_outer += _xlogx_over(po[:, j], q[j])
        val_outer += po[:, j] * v[j]
    qa, qb = q[-2], q[-1]
    va, vb = v[-2], v[-1]

    def line_kl(i):
        # i units on coordinate a, rest - i on b
        pa = i / K
        pb = (rest - i) / K
        return kl_outer + _xlogx_over(pa, qa) + _xlogx_over(pb, qb)

    # continuous KL minimiser along each line splits the rest in ratio qa:qb
    i_star = rest * qa / (qa + qb)
    i_lo = np.floor(i_star).astype(np.int64)
    i_hi = np.minimum(i_lo + 1, rest)
    kl_lo, kl_hi = line_kl(i_lo), line_kl(i_hi)
    seed = np.where(kl_lo <= kl_hi, i_lo, i_hi)
    feasible = np.minimum(kl_lo, kl_hi) <= epsilon
    if not np.any(feasible):
        return best
    rest, seed = rest[feasible], seed[feasible]
    kl_outer, val_outer = kl_outer[feasible], val_outer[feasible]

    # move mass toward the cheaper of the last two coordinates
    good = seed.copy()
    bad = rest + 1 if va <= vb else np.full_like(seed, -1)
    # invariant: good is feasible, bad is infeasible (or out of range)
    while True:
        gap = np.abs(bad - good) > 1
        if not np.any(gap):
            break
        mid = (good + bad) // 2
        mid_c = np.clip(mid, 0, rest)
        ok = (kl_outer + _xlogx_over(mid_c / K, qa) + _xlogx_over((rest - mid_c) / K, qb)) <= epsilon
        good = np.where(gap & ok, mid, good)
        bad = np.where(gap & ~ok, mid, bad)
    vals = val_outer + good / K * va + (rest - good) / K * vb
    return float(min(best, vals.min()))
