"""Registered property suites behind ``drspcrl verify``.

Each check returns a :class:`CheckResult` with the largest error it saw.
Solvers are looked up on their modules at call time, so a patched
``robust_core.solve_dual`` is what gets verified.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import curriculum, robust_core, tabular_mdp
from .agent import losses, networks


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: max_error={self.max_error:.3e} ({self.seconds:.1f}s) {self.detail}".rstrip()


def random_support(rng: np.random.Generator, n: int) -> robust_core.ValueSupport:
    return robust_core.ValueSupport(rng.uniform(-10.0, 10.0, n), rng.dirichlet(np.ones(n)))


# -- robust_core ----------------------------------------------------------------


def check_dual_oracle(n_supports: int = 200, seed: int = 0, grid_step: float = 1e-3) -> CheckResult:
    """solve_dual vs the simplex-grid oracle: |diff| <= 5e-3 (1 + range)."""
    rng = np.random.default_rng(seed)
    worst, worst_ratio = 0.0, 0.0
    for _ in range(n_supports):
        sup = random_support(rng, int(rng.integers(2, 5)))
        span = float(np.ptp(sup.values))
        for eps in (0.01, 0.1, 0.5, 1.0):
            err = abs(robust_core.solve_dual(sup, eps).robust_value - robust_core.brute_force_inner_min(sup, eps, grid_step))
            worst = max(worst, err)
            worst_ratio = max(worst_ratio, err / (5e-3 * (1.0 + span)))
    return CheckResult("dual_oracle_agreement", worst_ratio <= 1.0, worst, f"worst error/tolerance={worst_ratio:.3f}")


def interior_instance(rng: np.random.Generator):
    """A support and budget with beta* strictly inside the search interval."""
    while True:
        sup = random_support(rng, int(rng.integers(2, 5)))
        cap = -math.log(sup.min_mass())
        eps = float(rng.uniform(0.05, 0.8)) * cap
        if eps > 0.02 and np.ptp(sup.values) > 0.5:
            sol = robust_core.solve_dual(sup, eps)
            if not sol.at_boundary and sol.beta_star > 0:
                return sup, eps, sol


def check_envelope(n_instances: int = 100, seed: int = 1, h: float = 1e-4) -> CheckResult:
    """Central difference of the robust value in epsilon vs -beta*."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        sup, eps, sol = interior_instance(rng)
        step = min(h, 0.5 * eps)
        d = (robust_core.solve_dual(sup, eps + step).robust_value - robust_core.solve_dual(sup, eps - step).robust_value) / (2 * step)
        worst = max(worst, abs(d + sol.beta_star) / max(sol.beta_star, 1e-12))
    return CheckResult("envelope_identity", worst <= 1e-2, worst, "relative error of dV/deps against -beta*")


def check_limits(n_supports: int = 200, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_supports):
        sup = random_support(rng, int(rng.integers(1, 5)))
        worst = max(worst, abs(robust_core.solve_dual(sup, 0.0).robust_value - sup.nominal_value))
        cap = -math.log(sup.min_mass())
        for eps in (cap, cap + 0.5):
            worst = max(worst, abs(robust_core.solve_dual(sup, eps).robust_value - sup.min_value))
    return CheckResult("limit_cases", worst <= 1e-9, worst, "eps=0 -> nominal; eps>=-log P0(argmin) -> min")


# -- tabular_mdp ----------------------------------------------------------------


def random_mdp(rng: np.random.Generator, max_states: int = 3, n_actions: int = 2, max_successors: int = 3,
               gamma: float = 0.9) -> tabular_mdp.TabularMdp:
    S = int(rng.integers(1, max_states + 1))
    kernel = np.zeros((S, n_actions, S))
    for s in range(S):
        for a in range(n_actions):
            k = int(rng.integers(1, min(S, max_successors) + 1))
            succ = rng.choice(S, size=k, replace=False)
            kernel[s, a, succ] = rng.dirichlet(np.ones(k))
    return tabular_mdp.TabularMdp(rng.uniform(-1.0, 1.0, (S, n_actions)), kernel, gamma)


def oracle_value_iteration(mdp, epsilon, start, tol=1e-4, grid_step=1e-3, max_iter=2000):
    """Value iteration with the grid oracle as inner solver, warm-started at ``start``.

    The stopping rule bounds the distance to the oracle operator's own fixed
    point by ``tol`` wherever it starts.
    """
    inner = tabular_mdp.oracle_inner(grid_step)
    v = np.asarray(start, dtype=float)
    stop = tol * (1 - mdp.gamma) / mdp.gamma
    for _ in range(max_iter):
        v_new, _ = tabular_mdp.robust_bellman_backup(mdp, v, epsilon, inner)
        if np.max(np.abs(v_new - v)) <= stop:
            return v_new
        v = v_new
    raise tabular_mdp.ConvergenceError("oracle value iteration did not converge", float(np.max(np.abs(v_new - v))), max_iter)


def check_value_iteration(n_mdps: int = 50, seed: int = 3) -> CheckResult:
    """Dual VI vs oracle VI, robust <= nominal, and optimality over all deterministic policies."""
    rng = np.random.default_rng(seed)
    worst_oracle = worst_order = worst_opt = 0.0
    for _ in range(n_mdps):
        mdp = random_mdp(rng)
        eps = float(rng.choice([0.05, 0.2, 0.5, 1.0]))
        sol = tabular_mdp.robust_value_iteration(mdp, eps, tol=1e-9)
        oracle = oracle_value_iteration(mdp, eps, sol.values)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(oracle - sol.values))))
        nominal = tabular_mdp.nominal_value_iteration(mdp, tol=1e-9).values
        worst_order = max(worst_order, float(np.max(sol.values - nominal)))
        best = np.full(mdp.n_states, -np.inf)
        for pol in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
            best = np.maximum(best, tabular_mdp.robust_policy_evaluation(mdp, np.array(pol), eps, tol=1e-10, method="newton"))
        greedy = tabular_mdp.robust_policy_evaluation(mdp, sol.policy, eps, tol=1e-10, method="newton")
        worst_opt = max(worst_opt, float(np.max(np.abs(best - sol.values))), float(np.max(np.abs(greedy - sol.values))))
    passed = worst_oracle <= 1e-2 and worst_order <= 1e-9 and worst_opt <= 1e-6
    detail = f"oracle={worst_oracle:.2e} robust-nominal={worst_order:.2e} optimality={worst_opt:.2e}"
    return CheckResult("robust_value_iteration", passed, max(worst_oracle, worst_opt), detail)


# -- curriculum -----------------------------------------------------------------


def check_scheduler(fuzz_steps: int = 100_000, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok_steps = True
    # 2 alpha lambda spans (0.05, 0.95); below ~0.0138 no rule can reach 1e-6 in 1000 steps from eps=0
    for alpha, lam in ((1.0, 0.025), (5.0, 0.01), (0.5, 0.5), (2.0, 0.2), (5.0, 0.095)):
        state = curriculum.CurriculumState(epsilon_t=float(rng.uniform()), alpha=alpha, lambda_curr=lam)
        reached = False
        for _ in range(1000):
            curriculum.drspcrl_step(state, 0.0)
            if abs(state.epsilon_t - state.epsilon_budget) <= 1e-6:
                reached = True
                break
        ok_steps &= reached
        worst = max(worst, abs(state.epsilon_t - state.epsilon_budget))
        for b in (0.1, 0.5, 1.0, 3.0):
            state = curriculum.CurriculumState(epsilon_t=float(rng.uniform()), alpha=alpha, lambda_curr=lam)
            for _ in range(1000):
                curriculum.drspcrl_step(state, b)
            worst = max(worst, abs(state.epsilon_t - max(0.0, state.epsilon_budget - b / (2 * alpha))))
    in_range = fuzz_schedulers(fuzz_steps, rng)
    passed = ok_steps and worst <= 1e-6 and in_range
    return CheckResult("scheduler_dynamics", passed, worst, f"fixed points reached={ok_steps} fuzz in range={in_range}")


def fuzz_schedulers(steps: int, rng: np.random.Generator) -> bool:
    configs = [curriculum.DrSpcrl(), curriculum.Fixed(), curriculum.Linear(), curriculum.Plateau(), curriculum.RegretBuffer(interval=7)]
    per = max(1, steps // len(configs))
    for cfg in configs:
        state = curriculum.CurriculumState(alpha=float(rng.uniform(0, 5)), lambda_curr=float(rng.uniform(0.001, 1.0)))
        sched = curriculum.Scheduler(cfg, state)
        betas = rng.exponential(2.0, per)
        values = rng.normal(0, 10, per)
        noise = rng.uniform(0, 3)
        for t in range(per):
            eps = sched.step(t, float(betas[t]), float(values[t]), rng, lambda e: noise * e)
            if not 0.0 <= eps <= state.epsilon_budget:
                return False
        if any(not 0 <= h[1] <= state.epsilon_budget for h in state.history):
            return False
    return True


# -- agent gradients --------------------------------------------------------------


def finite_difference(f, arrays, h=1e-6):
    """Central differences of scalar f() with respect to every entry of every array (mutated in place)."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + h
            up = f()
            arr[i] = orig - h
            down = f()
            arr[i] = orig
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return float(np.max(np.abs(a - n) / np.maximum(1e-3, np.abs(a) + np.abs(n))))


def gradient_cases(seed: int = 5):
    """(name, loss_fn returning (loss, grads), arrays) for every hand-derived path."""
    rng = np.random.default_rng(seed)
    B, d = 6, 3
    obs = rng.normal(size=(B, d))
    cases = []

    cat = networks.MlpSpec(d, 4, (5, 4))
    p_cat = networks.init_params(cat, rng, output_scale=1.0)
    acts = rng.integers(0, 4, B)
    old = networks.categorical_log_prob(networks.mlp_forward(cat, p_cat, obs), acts) + rng.normal(0, 0.05, B)
    adv = rng.normal(size=B)
    cases.append(("categorical_surrogate", lambda: losses.clipped_surrogate_loss(cat, p_cat, None, obs, acts, old, adv, 0.2, 0.01)[:2], p_cat))

    gau = networks.MlpSpec(d, 2, (5, 4))
    p_gau = networks.init_params(gau, rng, output_scale=1.0)
    log_std = rng.normal(-0.3, 0.2, 2)
    a_cont = rng.normal(size=(B, 2))
    old_g = networks.gaussian_log_prob(networks.mlp_forward(gau, p_gau, obs), log_std, a_cont) + rng.normal(0, 0.05, B)

    def gaussian_loss():
        loss, grads, g_ls = losses.clipped_surrogate_loss(gau, p_gau, log_std, obs, a_cont, old_g, adv, 0.2, 0.01)
        return loss, grads + [g_ls]

    cases.append(("gaussian_surrogate", gaussian_loss, p_gau + [log_std]))

    critic = networks.MlpSpec(d, 1, (5, 4))
    p_crit = networks.init_params(critic, rng, output_scale=1.0)
    v_old = networks.mlp_forward(critic, p_crit, obs)[:, 0] + rng.normal(0, 0.5, B)
    rets = rng.normal(size=B)
    cases.append(("clipped_value", lambda: losses.value_loss(critic, p_crit, obs, rets, v_old, 0.2, True), p_crit))
    cases.append(("value", lambda: losses.value_loss(critic, p_crit, obs, rets, v_old, 0.2, False), p_crit))

    dual = networks.MlpSpec(d + 1, 1, (5, 4), output="softplus", beta_floor=1e-3)
    p_dual = networks.init_params(dual, rng, output_scale=1.0)
    inputs = rng.normal(size=(B, d + 1))
    branches = rng.normal(size=(B, 4))
    cases.append(("dual", lambda: losses.dual_loss(dual, p_dual, inputs, branches, 0.3), p_dual))

    up = rng.normal(size=(B, 4))
    cases.append(("mlp_contraction", lambda: (float(np.sum(up * networks.mlp_forward(cat, p_cat, obs))),
                                              networks.mlp_gradients(cat, p_cat, obs, up)), p_cat))
    return cases


def check_gradients(seed: int = 5) -> CheckResult:
    worst, names = 0.0, []
    for name, fn, arrays in gradient_cases(seed):
        analytic = [np.array(g, copy=True) for g in fn()[1]]
        numeric = finite_difference(lambda: fn()[0], arrays)
        err = relative_error(analytic, numeric)
        worst = max(worst, err)
        if err > 1e-5:
            names.append(name)
    return CheckResult("gradient_exactness", not names, worst, f"failed paths: {names}" if names else "")


SUITES = {
    "dual": (check_dual_oracle,),
    "envelope": (check_envelope,),
    "limits": (check_limits,),
    "vi": (check_value_iteration,),
    "scheduler": (check_scheduler,),
    "gradients": (check_gradients,),
}
SCOPES = (*SUITES, "all")


def run_scope(scope: str) -> list[CheckResult]:
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    checks = [c for s in SUITES for c in SUITES[s]] if scope == "all" else list(SUITES[scope])
    results = []
    for check in checks:
        t0 = time.perf_counter()
        try:
            res = check()
        except Exception as exc:  # a crash is a failed property, not a crashed report
            res = CheckResult(check.__name__.removeprefix("check_"), False, math.inf, f"raised {exc!r}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
