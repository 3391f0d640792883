import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drspcrl.curriculum import (
    CurriculumState,
    DrSpcrl,
    Fixed,
    Linear,
    Plateau,
    RegretBuffer,
    RegretBufferState,
    Scheduler,
    drspcrl_step,
    linear_step,
    plateau_step,
    regret_step,
    validate_scheduler,
)


def state(eps=0.0, budget=1.0, alpha=0.5, lam=0.1):
    return CurriculumState(epsilon_t=eps, epsilon_budget=budget, alpha=alpha, lambda_curr=lam)


# -- drspcrl_step ---------------------------------------------------------------


def test_budget_is_fixed_point():
    assert drspcrl_step(state(eps=1.0), 0.0).epsilon_t == 1.0


def test_direct_formula_from_zero():
    assert drspcrl_step(state(eps=0.0), 0.0).epsilon_t == pytest.approx(0.1, abs=1e-15)


def test_direct_formula_with_beta():
    assert drspcrl_step(state(eps=0.5), 2.0).epsilon_t == pytest.approx(0.35, abs=1e-15)


def test_history_is_recorded():
    s = drspcrl_step(state(eps=0.2), 0.7)
    assert s.history == [(0, 0.2, 0.7)] and s.step_count == 1


def test_rejects_negative_beta():
    with pytest.raises(ValueError):
        drspcrl_step(state(), -0.1)


@pytest.mark.parametrize("alpha, lam", [(0.5, 0.1), (5.0, 0.01), (2.0, 0.2)])
def test_geometric_convergence_to_budget(alpha, lam):
    s = state(eps=0.0, alpha=alpha, lam=lam)
    ratio = abs(1 - 2 * alpha * lam)
    for k in range(1, 50):
        drspcrl_step(s, 0.0)
        assert abs(s.epsilon_t - 1.0) == pytest.approx(ratio**k, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("b", [0.1, 0.5, 0.99, 1.5, 3.0])
def test_stalls_at_stationary_point(b):
    alpha = 0.5
    s = state(eps=0.0, alpha=alpha, lam=0.2)
    for _ in range(1000):
        drspcrl_step(s, b)
    assert s.epsilon_t == pytest.approx(max(0.0, 1.0 - b / (2 * alpha)), abs=1e-6)


@given(st.floats(0, 1), st.floats(0, 10), st.floats(0, 10))
def test_monotone_pressure(eps, b1, b2):
    lo, hi = sorted((b1, b2))
    a = drspcrl_step(state(eps=eps), lo).epsilon_t
    c = drspcrl_step(state(eps=eps), hi).epsilon_t
    assert c <= a


def test_state_validation():
    with pytest.raises(ValueError):
        CurriculumState(epsilon_budget=0.0)
    with pytest.raises(ValueError):
        CurriculumState(lambda_curr=0.0)
    assert CurriculumState(epsilon_t=5.0).epsilon_t == 1.0


# -- linear / fixed -------------------------------------------------------------


def test_linear_reaches_budget_after_100_steps():
    s = state()
    cfg = Linear(eps_step=0.01, start_iteration=0)
    for it in range(100):
        linear_step(s, it, cfg)
    assert s.epsilon_t == pytest.approx(1.0, abs=1e-12)
    linear_step(s, 100, cfg)
    assert s.epsilon_t == 1.0


def test_linear_holds_before_start():
    s = state(eps=0.3)
    linear_step(s, 2, Linear(eps_step=0.01, start_iteration=5))
    assert s.epsilon_t == 0.3


def test_linear_zero_step_is_constant():
    s = state(eps=0.4)
    for it in range(20):
        linear_step(s, it, Linear(eps_step=0.0, start_iteration=0))
    assert s.epsilon_t == 0.4


def test_fixed_scheduler_holds_budget():
    sched = Scheduler(Fixed(), state(eps=0.0))
    assert sched.epsilon == 1.0
    rng = np.random.default_rng(0)
    for it in range(5):
        assert sched.step(it, 3.0, 0.0, rng) == 1.0


def test_fixed_scheduler_explicit_epsilon():
    sched = Scheduler(Fixed(epsilon=0.0), state(eps=0.5))
    assert sched.epsilon == 0.0


# -- plateau ----------------------------------------------------------------------


def test_plateau_flat_history_raises_epsilon():
    s = state(eps=0.2)
    plateau_step(s, [5.0] * 20, Plateau())
    assert s.epsilon_t == pytest.approx(0.21, abs=1e-15)


def test_plateau_improving_history_holds():
    hist = [1.0] * 10 + [1.5] * 10
    s = state(eps=0.2)
    plateau_step(s, hist, Plateau())
    assert s.epsilon_t == 0.2


def test_plateau_at_budget_stays():
    s = state(eps=1.0)
    plateau_step(s, [5.0] * 20, Plateau())
    assert s.epsilon_t == 1.0


def test_plateau_short_history_holds():
    s = state(eps=0.2)
    plateau_step(s, [5.0] * 19, Plateau())
    assert s.epsilon_t == 0.2


# -- regret buffer ----------------------------------------------------------------


class ScriptedRng:
    """Stands in for a Generator with fixed draws."""

    def __init__(self, roll, uniform=0.0, normal=0.0):
        self.roll, self.u, self.n = roll, uniform, normal

    def random(self):
        return self.roll

    def uniform(self, lo, hi):
        return lo + (hi - lo) * self.u

    def normal(self, mean, std):
        return mean + std * self.n


def test_regret_empty_buffer_generates_nearby():
    rng = np.random.default_rng(3)
    for _ in range(200):
        s = state(eps=0.5)
        regret_step(s, RegretBuffer(), rng, lambda e: 1.0, RegretBufferState())
        assert abs(s.epsilon_t - 0.5) <= 0.02


def test_regret_replay_without_noise_returns_entry():
    s = state(eps=0.7)
    buf = RegretBufferState([[0.3, 2.0]])
    regret_step(s, RegretBuffer(edit_noise_std=0.0), ScriptedRng(roll=0.0), lambda e: 1.0, buf)
    assert s.epsilon_t == 0.3


def test_regret_candidate_is_clamped():
    s = state(eps=0.7)
    buf = RegretBufferState([[1.0, 2.0]])
    regret_step(s, RegretBuffer(edit_noise_std=0.05), ScriptedRng(roll=0.0, normal=1.0), lambda e: 1.0, buf)
    assert s.epsilon_t == 1.0


def test_regret_buffer_evicts_lowest_score():
    buf = RegretBufferState()
    for i in range(5):
        buf.add(i / 10, score=float(i), capacity=3)
    assert [e[1] for e in buf.entries] == [2.0, 3.0, 4.0]
    assert buf.best() == 0.4


def test_regret_scheduler_only_acts_on_interval():
    sched = Scheduler(RegretBuffer(interval=3), state(eps=0.5))
    rng = np.random.default_rng(0)
    out = [sched.step(it, 0.1, 0.0, rng, lambda e: e) for it in range(6)]
    assert out[0] == out[1] == 0.5
    assert out[2] != 0.5


# -- all schedulers ---------------------------------------------------------------


@pytest.mark.parametrize(
    "cfg", [DrSpcrl(), Fixed(), Fixed(epsilon=0.4), Linear(), Plateau(interval=2, window=3), RegretBuffer(interval=2)]
)
def test_schedulers_stay_in_range_and_reproduce(cfg):
    def run(seed):
        rng = np.random.default_rng(seed)
        sched = Scheduler(cfg, state(eps=0.3, alpha=5.0, lam=0.05))
        eps = []
        for it in range(400):
            eps.append(sched.step(it, float(rng.exponential(1.0)), float(rng.normal()), rng, lambda e: e * 2))
        return eps

    a = run(11)
    assert all(0.0 <= e <= 1.0 for e in a)
    assert a == run(11)


def test_scheduler_round_trip():
    sched = Scheduler(RegretBuffer(interval=1), state(eps=0.3))
    rng = np.random.default_rng(0)
    for it in range(5):
        sched.step(it, 0.2, 1.0, rng, lambda e: e)
    back = Scheduler.from_dict(sched.to_dict())
    assert back.to_dict() == sched.to_dict()


@pytest.mark.parametrize(
    "cfg",
    [Fixed(epsilon=-1.0), Linear(eps_step=-0.1), Plateau(interval=0), RegretBuffer(replay_prob=1.5),
     RegretBuffer(buffer_size=0)],
)
def test_invalid_configs(cfg):
    with pytest.raises(ValueError):
        validate_scheduler(cfg)
