import math

import numpy as np
import pytest

from drspcrl.agent import TabularPolicy
from drspcrl.environments import Box, ChainEnv, Discrete, PendulumEnv
from drspcrl.eval_harness import (
    SWEEP_COLUMNS,
    EvalReport,
    EvaluationError,
    PerturbationSpec,
    episode_streams,
    evaluate_policy,
    perturb_action,
    perturb_observation,
    perturb_physics,
    read_sweep_csv,
    sweep,
    write_sweep_csv,
)
from drspcrl.tabular_mdp import robust_policy_evaluation

from conftest import chain_test_policy, mixed_policy_table


def zero_torque(obs, rng):
    return np.array([0.0])


@pytest.mark.parametrize("kind, level", [("observation", -0.1), ("action", 1.5), ("environment", 1.0), ("wind", 0.1),
                                         ("observation", math.nan)])
def test_spec_validation(kind, level):
    with pytest.raises(ValueError):
        PerturbationSpec(kind, level)


# -- observation noise ----------------------------------------------------------


def test_zero_sigma_is_identity():
    obs = np.array([1.0, -2.0])
    np.testing.assert_array_equal(perturb_observation(obs, 0.0, np.random.default_rng(0)), obs)


def test_observation_noise_std():
    rng = np.random.default_rng(0)
    draws = perturb_observation(np.zeros(100_000), 0.5, rng)
    assert abs(draws.std() - 0.5) <= 0.01


def test_observation_noise_is_seeded():
    a = perturb_observation(np.zeros(5), 0.3, np.random.default_rng(7))
    b = perturb_observation(np.zeros(5), 0.3, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)


# -- action noise -----------------------------------------------------------------


def test_zero_p_keeps_action():
    rng = np.random.default_rng(0)
    assert all(perturb_action(1, 0.0, Discrete(2), rng) == 1 for _ in range(100))


def test_p_one_is_uniform():
    rng = np.random.default_rng(0)
    draws = [perturb_action(1, 1.0, Discrete(4), rng) for _ in range(20_000)]
    counts = np.bincount(draws, minlength=4) / len(draws)
    np.testing.assert_allclose(counts, 0.25, atol=0.015)
    box = [perturb_action(np.array([0.0]), 1.0, Box(-2.0, 2.0), rng)[0] for _ in range(5000)]
    assert -2 <= min(box) and max(box) <= 2 and abs(np.mean(box)) < 0.1


def test_replacement_frequency():
    rng = np.random.default_rng(0)
    # a sentinel action outside the space shows every replacement
    swaps = np.mean([perturb_action(-1, 0.3, Discrete(2), rng) != -1 for _ in range(100_000)])
    assert abs(swaps - 0.3) <= 0.005


# -- physics noise ----------------------------------------------------------------


def test_zero_delta_is_nominal():
    nominal = {"mass": 1.0, "length": 2.0}
    assert perturb_physics(nominal, 0.0, np.random.default_rng(0)) == nominal


def test_physics_range_and_untouched_parameters():
    nominal = {"mass": 1.0, "length": 2.0, "gravity": 10.0}
    rng = np.random.default_rng(0)
    for _ in range(500):
        out = perturb_physics(nominal, 0.3, rng, names=("mass", "length"))
        assert out["gravity"] == 10.0
        for k in ("mass", "length"):
            assert 0.7 * nominal[k] <= out[k] <= 1.3 * nominal[k]


def test_physics_redrawn_each_episode():
    seen = []

    def record(obs, rng):
        if not seen or seen[-1] != env.physics["mass"]:
            seen.append(env.physics["mass"])
        return np.array([0.0])

    env = PendulumEnv(episode_length=3)
    evaluate_policy(record, env, PerturbationSpec("environment", 0.3), 5)
    assert len(set(seen)) == 5
    assert env.physics == env.nominal  # restored afterwards


# -- evaluate_policy --------------------------------------------------------------


@pytest.mark.parametrize("kind", ["observation", "action", "environment"])
@pytest.mark.parametrize("env_cls", [ChainEnv, PendulumEnv])
def test_zero_level_reproduces_nominal_bit_exactly(kind, env_cls):
    env = env_cls()
    policy = chain_test_policy() if env_cls is ChainEnv else (lambda o, r: np.array([np.tanh(o[1]) + 0.1 * r.normal()]))
    nominal = evaluate_policy(policy, env, None, 10, master_seed=5)
    perturbed = evaluate_policy(policy, env, PerturbationSpec(kind, 0.0), 10, master_seed=5)
    assert perturbed.per_episode_returns == nominal.per_episode_returns


def test_report_schema():
    rep = evaluate_policy(chain_test_policy(), ChainEnv(), None, 100, master_seed=1)
    assert rep.episodes == 100 == len(rep.per_episode_returns)
    se = np.std(rep.per_episode_returns, ddof=1) / 10
    assert rep.std_error == pytest.approx(se, rel=1e-12)
    assert rep.ci95_low == pytest.approx(rep.mean_return - 1.96 * se, rel=1e-12)
    assert rep.ci95_high == pytest.approx(rep.mean_return + 1.96 * se, rel=1e-12)


def test_episode_seeds_do_not_depend_on_level():
    env = PendulumEnv(episode_length=2)
    firsts = {}

    for level in (0.1, 0.4):
        seen = []

        def spy(obs, rng):
            seen.append(tuple(obs))
            return np.array([0.0])

        evaluate_policy(spy, env, PerturbationSpec("action", level), 5, master_seed=3)
        firsts[level] = seen[::2]  # initial observation of each episode
    assert firsts[0.1] == firsts[0.4]
    assert len(set(firsts[0.1])) == 5


def test_order_independent_episodes():
    env = ChainEnv(slip_prob=0.3)
    rep = evaluate_policy(chain_test_policy(), env, PerturbationSpec("action", 0.2), 6, master_seed=9)
    from drspcrl.eval_harness import run_episode

    backwards = [run_episode(chain_test_policy(), env, PerturbationSpec("action", 0.2), 9, i) for i in reversed(range(6))]
    assert rep.per_episode_returns == backwards[::-1]


def test_needs_two_episodes():
    with pytest.raises(ValueError):
        evaluate_policy(chain_test_policy(), ChainEnv(), None, 1)


def test_failure_names_the_episode():
    def broken(obs, rng):
        return 7

    with pytest.raises(EvaluationError) as info:
        evaluate_policy(broken, ChainEnv(), None, 3, master_seed=42)
    assert info.value.episode == 0 and info.value.master_seed == 42


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_action_noise_matches_mixed_policy(p):
    gamma = 0.9
    env = ChainEnv()
    policy = chain_test_policy()
    exact = robust_policy_evaluation(env.tabular_model(gamma), mixed_policy_table(np.vstack([policy.table, [[0.5, 0.5]]]), p),
                                     0.0)[env.start]
    rep = evaluate_policy(policy, env, PerturbationSpec("action", p), 2000, master_seed=11, discount=gamma)
    assert abs(rep.mean_return - exact) <= 3 * rep.std_error


# -- sweeps -------------------------------------------------------------------------


def test_sweep_rows_and_csv_round_trip(tmp_path):
    levels = {k: [0.0, 0.2] for k in ("observation", "action", "environment")}
    reports = sweep(chain_test_policy(), ChainEnv(), levels, episodes=5, master_seed=2)
    assert [(r.spec.kind, r.spec.level) for r in reports] == [(k, lv) for k in levels for lv in levels[k]]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(reports, path)
    assert path.read_text().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    rows = read_sweep_csv(path)
    assert rows[3]["mean_return"] == reports[3].mean_return and rows[3]["seed"] == 2


def test_sweep_rejects_empty_levels():
    with pytest.raises(ValueError):
        sweep(chain_test_policy(), ChainEnv(), {"action": []})
    with pytest.raises(ValueError):
        sweep(chain_test_policy(), ChainEnv(), {})


def test_report_from_returns():
    rep = EvalReport.from_returns(PerturbationSpec("action", 0.1), [1.0, 3.0], 4)
    assert rep.mean_return == 2.0 and rep.std_error == pytest.approx(1.0)
    assert rep.csv_row()["perturbation_kind"] == "action"


def test_deterministic_tabular_policy_ignores_rng():
    pol = TabularPolicy(np.array([[0.0, 1.0]] * 7), deterministic=True)
    obs = np.eye(7)[3]
    assert {pol(obs, np.random.default_rng(s)) for s in range(20)} == {1}
