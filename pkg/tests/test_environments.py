import math

import numpy as np
import pytest

from drspcrl.environments import ChainEnv, EnvError, PendulumEnv, make_env, wrap_angle
from drspcrl.tabular_mdp import robust_policy_evaluation


# -- pendulum -------------------------------------------------------------------


def test_upright_equilibrium_is_preserved():
    env = PendulumEnv(damping=0.0)
    env.reset()
    env.set_state(0.0, 0.0)
    for _ in range(50):
        res = env.step(np.array([0.0]))
        assert res.reward == 0.0
    np.testing.assert_array_equal(res.observation, [1.0, 0.0, 0.0])


def test_energy_is_conserved_without_torque_or_damping():
    env = PendulumEnv(damping=0.0)
    env.reset()
    env.set_state(2.0, 0.5)
    e0 = prev = env.energy()
    for _ in range(200):
        env.step(np.array([0.0]))
        e = env.energy()
        assert abs(e - prev) <= 1e-3
        prev = e
    assert abs(prev - e0) <= 1e-3


def test_energy_matches_fine_reference_trajectory():
    # a reference run with 50x finer substeps lands on the same state
    coarse, fine = PendulumEnv(damping=0.0), PendulumEnv(damping=0.0, substeps=1000)
    for env in (coarse, fine):
        env.reset()
        env.set_state(2.5, 0.0)
        for _ in range(20):
            env.step(np.array([0.3]))
    np.testing.assert_allclose(coarse._observe(), fine._observe(), atol=1e-4)


def test_reward_formula():
    env = PendulumEnv()
    env.reset()
    env.set_state(3.0, 1.5)
    res = env.step(np.array([2.0]))
    assert res.reward == pytest.approx(-(wrap_angle(3.0) ** 2 + 0.1 * 1.5**2 + 0.001 * 4.0), abs=1e-12)


def test_pendulum_episode_length():
    env = PendulumEnv()
    env.reset()
    for t in range(200):
        res = env.step(np.array([0.0]))
        assert res.done == (t == 199)
    assert res.truncated
    with pytest.raises(EnvError):
        env.step(np.array([0.0]))


@pytest.mark.parametrize("action", [np.array([2.5]), np.array([np.nan]), np.array([0.0, 0.0])])
def test_pendulum_rejects_bad_actions(action):
    env = PendulumEnv()
    env.reset()
    with pytest.raises(EnvError):
        env.step(action)


def test_step_before_reset():
    with pytest.raises(EnvError):
        PendulumEnv().step(np.array([0.0]))


def test_pendulum_branches_identical():
    env = PendulumEnv()
    env.reset()
    snap = env.snapshot()
    out = env.branch_sample(snap, np.array([1.0]), 4, np.random.default_rng(0))
    for res in out[1:]:
        np.testing.assert_array_equal(res.observation, out[0].observation)
        assert res.reward == out[0].reward


def test_heavier_pendulum_accelerates_less_at_bottom():
    env = PendulumEnv()
    base = abs(env.angular_acceleration(math.pi, 0.0, 1.0))
    env.apply_physics_scale({"mass": 2.0})
    assert abs(env.angular_acceleration(math.pi, 0.0, 1.0)) < base


def test_unit_scales_are_bit_identical():
    a, b = PendulumEnv(seed=3), PendulumEnv(seed=3)
    b.apply_physics_scale({"mass": 1.0, "damping": 1.0, "length": 1.0})
    a.reset(), b.reset()
    for t in range(30):
        u = np.array([np.sin(t)])
        np.testing.assert_array_equal(a.step(u).observation, b.step(u).observation)


def test_scales_stay_relative_to_nominal():
    env = PendulumEnv()
    rng = np.random.default_rng(0)
    for _ in range(100):
        env.apply_physics_scale({k: rng.uniform(0.7, 1.3) for k in env.perturbable})
        for k in env.perturbable:
            assert 0.7 * env.nominal[k] <= env.physics[k] <= 1.3 * env.nominal[k]
    env.apply_physics_scale({"mass": 1.0})
    assert env.physics == env.nominal


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_nonpositive_scale_rejected(scale):
    with pytest.raises(ValueError):
        PendulumEnv().apply_physics_scale({"mass": scale})


# -- chain ----------------------------------------------------------------------


def test_chain_without_slip_is_deterministic():
    env = ChainEnv(slip_prob=0.0)
    env.reset()
    cells = []
    for a in (1, 1, 0, 1, 1):
        env.step(a)
        cells.append(env.state_index())
    assert cells == [4, 5, 4, 5, 6]
    res = env.step(1)
    assert res.reward == 1.0 and res.done and not res.truncated


def test_chain_rewards():
    env = ChainEnv()
    assert [env.cell_reward(c) for c in range(7)] == [0.1, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0]


def slip_frequency(seed, n=10_000):
    env = ChainEnv(slip_prob=0.2, seed=seed)
    env.reset()
    out = env.branch_sample(env.snapshot(), 1, n, np.random.default_rng(seed))
    return np.mean([ChainEnv.decode(r.observation) == 2 for r in out])


def test_chain_slip_frequency():
    # +-0.01 is 2.5 standard errors at n=10k, so about 1 seed in 80 misses by chance
    assert abs(slip_frequency(1) - 0.2) <= 0.01


def test_chain_slip_frequency_unbiased():
    pooled = np.mean([slip_frequency(s) for s in range(20)])
    assert abs(pooled - 0.2) <= 0.003  # 200k draws, standard error 0.0009


def test_single_branch_equals_step():
    env = ChainEnv(slip_prob=0.3, seed=9)
    env.reset()
    for a in (1, 0, 1):
        snap = env.snapshot()
        (branch,) = env.branch_sample(snap, a, 1, np.random.default_rng(1))
        res = env.step(a)
        np.testing.assert_array_equal(branch.observation, res.observation)
        assert (branch.reward, branch.done) == (res.reward, res.done)
        if res.done:
            break


def test_snapshot_round_trip():
    env = ChainEnv(slip_prob=0.4, seed=5)
    env.reset()
    env.step(1)
    snap = env.snapshot()
    first = [env.step(a).observation.copy() for a in (1, 0, 0)]
    env.restore(snap)
    again = [env.step(a).observation.copy() for a in (1, 0, 0)]
    np.testing.assert_array_equal(first, again)


def test_foreign_snapshot_rejected():
    chain, pend = ChainEnv(), PendulumEnv()
    pend.reset()
    with pytest.raises(EnvError):
        chain.restore(pend.snapshot())


def test_chain_invalid_params():
    with pytest.raises(ValueError):
        ChainEnv(slip_prob=0.6)
    with pytest.raises(ValueError):
        ChainEnv(start=0)
    with pytest.raises(EnvError):
        env = ChainEnv()
        env.reset()
        env.step(2)


def test_determinism():
    def run(seed):
        env = make_env("chain", {"slip_prob": 0.3}, seed=seed)
        env.reset()
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(300):
            res = env.step(int(rng.integers(2)))
            out.append((env.state_index(), res.reward))
            if res.done:
                env.reset()
        return out

    assert run(4) == run(4)


@pytest.mark.slow
def test_chain_matches_tabular_evaluation():
    gamma = 0.9
    env = ChainEnv(slip_prob=0.2, max_steps=10_000)
    policy = np.array([0, 0, 1, 1, 1, 1, 0, 0])  # left near the safe end, right elsewhere
    exact = robust_policy_evaluation(env.tabular_model(gamma), policy, 0.0)[env.start]
    env.reset(seed=0)
    returns = np.empty(100_000)
    for i in range(returns.size):
        env.reset()
        g, disc, done = 0.0, 1.0, False
        while not done:
            res = env.step(int(policy[env.state_index()]))
            g += disc * res.reward
            disc *= gamma
            done = res.done
        returns[i] = g
    se = returns.std(ddof=1) / np.sqrt(returns.size)
    assert abs(returns.mean() - exact) <= 3 * se
