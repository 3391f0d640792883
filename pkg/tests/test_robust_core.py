import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drspcrl.robust_core import (
    DualSolverConfig,
    SupportError,
    ValueSupport,
    brute_force_inner_min,
    dual_objective,
    kl_divergence,
    solve_dual,
    solve_dual_batch,
    worst_case_distribution,
)

from conftest import random_support


# -- ValueSupport / config ----------------------------------------------------


@pytest.mark.parametrize(
    "values, probs",
    [([], []), ([1.0, 2.0], [1.0]), ([1.0, np.nan], [0.5, 0.5]), ([1.0, 2.0], [0.7, 0.7]), ([1.0, 2.0], [1.5, -0.5])],
)
def test_support_rejects_malformed(values, probs):
    with pytest.raises(SupportError):
        ValueSupport(values, probs)


def test_support_accepts_tiny_rounding():
    ValueSupport([1.0, 2.0, 3.0], [1 / 3, 1 / 3, 1 / 3])


def test_solver_config_validation():
    with pytest.raises(ValueError):
        DualSolverConfig(beta_min=1.0, beta_max=0.5)
    with pytest.raises(ValueError):
        DualSolverConfig(tolerance=0.0)


# -- kl_divergence -------------------------------------------------------------


def test_kl_identical_is_zero():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0


def test_kl_point_mass_vs_uniform():
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)


def test_kl_direct_formula():
    expected = 0.7 * math.log(1.4) + 0.3 * math.log(0.6)
    assert kl_divergence([0.7, 0.3], [0.5, 0.5]) == pytest.approx(expected, abs=1e-12)


def test_kl_errors():
    with pytest.raises(SupportError):
        kl_divergence([0.5, 0.5], [1.0])
    with pytest.raises(SupportError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5), st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5))
def test_kl_nonnegative(a, b):
    n = min(len(a), len(b))
    p = np.array(a[:n]) / sum(a[:n])
    q = np.array(b[:n]) / sum(b[:n])
    assert kl_divergence(p, q) >= 0.0


# -- dual_objective ------------------------------------------------------------


def test_dual_objective_singleton():
    assert dual_objective(1.0, ValueSupport([0.0], [1.0]), 0.5) == pytest.approx(-0.5, abs=1e-15)


@pytest.mark.parametrize("beta", [1e-6, 0.3, 1.0, 1e6])
def test_dual_objective_constant_values(beta):
    assert dual_objective(beta, ValueSupport([2.5, 2.5, 2.5], [0.2, 0.3, 0.5]), 0.0) == pytest.approx(2.5, abs=1e-12)


def test_dual_objective_direct_formula():
    expected = -math.log(0.5 * (1 + math.exp(-1)))
    assert dual_objective(1.0, ValueSupport([0.0, 1.0], [0.5, 0.5]), 0.0) == pytest.approx(expected, abs=1e-14)


def test_dual_objective_no_overflow():
    sup = ValueSupport([0.0, 1e4, -1e4], [0.3, 0.3, 0.4])
    for beta in (1e-6, 1e-3, 1.0, 1e6):
        assert math.isfinite(dual_objective(beta, sup, 0.1))


def test_dual_objective_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        dual_objective(0.0, ValueSupport([0.0], [1.0]), 0.1)


def test_dual_objective_unimodal_in_beta(rng):
    for _ in range(50):
        sup = random_support(rng)
        eps = float(rng.uniform(0.01, 1.0))
        f = np.array([dual_objective(b, sup, eps) for b in np.logspace(-6, 6, 100)])
        d = np.sign(np.diff(f)[np.abs(np.diff(f)) > 1e-12])
        # once the sequence starts decreasing it never increases again
        assert not np.any((d[:-1] < 0) & (d[1:] > 0))


# -- solve_dual ----------------------------------------------------------------


def test_solve_constant_values():
    sol = solve_dual(ValueSupport([0.0, 0.0, 0.0], [1 / 3, 1 / 3, 1 / 3]), 0.2)
    assert sol.robust_value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(sol.worst_case_probs, [1 / 3] * 3, atol=1e-9)


def test_solve_point_mass_boundary():
    sol = solve_dual(ValueSupport([0.0, 1.0], [0.5, 0.5]), 1.0)
    assert sol.robust_value == 0.0
    assert sol.beta_star == 0.0 and sol.at_boundary
    np.testing.assert_allclose(sol.worst_case_probs, [1.0, 0.0])


def test_solve_matches_oracle_small():
    sup = ValueSupport([0.0, 1.0], [0.5, 0.5])
    assert solve_dual(sup, 0.1).robust_value == pytest.approx(brute_force_inner_min(sup, 0.1, 1e-3), abs=1e-3)


def test_solve_epsilon_zero_special_case():
    sup = ValueSupport([1.0, 3.0], [0.25, 0.75])
    sol = solve_dual(sup, 0.0)
    assert sol.robust_value == sup.nominal_value
    assert sol.beta_star == DualSolverConfig().beta_max and sol.at_boundary
    np.testing.assert_array_equal(sol.worst_case_probs, sup.probs)


def test_solve_errors():
    with pytest.raises(ValueError):
        solve_dual(ValueSupport([0.0, 1.0], [0.5, 0.5]), -0.1)
    with pytest.raises(SupportError):
        solve_dual(([0.0], [1.0]), 0.1)


def test_solution_invariants(rng):
    for _ in range(300):
        sup = random_support(rng)
        for eps in (0.01, 0.1, 0.5, 1.0, 3.0):
            sol = solve_dual(sup, eps)
            assert sup.min_value - 1e-9 <= sol.robust_value <= sup.nominal_value + 1e-9
            wc = sol.worst_case_probs
            assert abs(wc.sum() - 1) <= 1e-9 and np.all(wc >= 0)
            assert np.all(wc[sup.probs == 0] == 0)
            if not sol.at_boundary:
                assert abs(kl_divergence(wc, sup.probs) - eps) <= DualSolverConfig().tolerance
                np.testing.assert_allclose(wc, worst_case_distribution(sup, sol.beta_star), atol=1e-8)


def test_zero_probability_outcomes_are_ignored():
    # the 0-probability outcome has the smallest value but cannot receive mass
    sup = ValueSupport([-100.0, 1.0, 2.0], [0.0, 0.5, 0.5])
    sol = solve_dual(sup, 5.0)
    assert sol.robust_value == 1.0
    assert sol.worst_case_probs[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=4),
    st.lists(st.floats(0.05, 1.0), min_size=2, max_size=4),
    st.floats(0.0, 2.0),
    st.floats(0.0, 2.0),
)
def test_robust_value_monotone_in_epsilon(values, weights, e1, e2):
    n = min(len(values), len(weights))
    sup = ValueSupport(values[:n], np.array(weights[:n]) / sum(weights[:n]))
    lo, hi = sorted((e1, e2))
    assert solve_dual(sup, hi).robust_value <= solve_dual(sup, lo).robust_value + 1e-9


def test_batch_matches_scalar(rng):
    rows = [random_support(rng, 4) for _ in range(40)]
    v = np.array([r.values for r in rows])
    p = np.array([r.probs for r in rows])
    p[::5, 0] = 0.0  # zero-probability entries are allowed in batch rows
    p /= p.sum(axis=1, keepdims=True)
    for eps in (0.0, 0.05, 0.5, 2.0):
        values, beta = solve_dual_batch(v, p, eps)
        for i in range(len(rows)):
            sol = solve_dual(ValueSupport(v[i], p[i]), eps)
            assert values[i] == pytest.approx(sol.robust_value, abs=1e-9)
            assert beta[i] == pytest.approx(sol.beta_star, rel=1e-5, abs=1e-9)


# -- worst_case_distribution ----------------------------------------------------


def test_tilt_constant_values():
    np.testing.assert_allclose(worst_case_distribution(ValueSupport([3.0, 3.0], [0.5, 0.5]), 0.7), [0.5, 0.5])


def test_tilt_large_beta_vanishes():
    np.testing.assert_allclose(worst_case_distribution(ValueSupport([0.0, 1.0], [0.5, 0.5]), 1e9), [0.5, 0.5], atol=1e-8)


def test_tilt_direct_formula():
    e = math.exp(-1)
    np.testing.assert_allclose(
        worst_case_distribution(ValueSupport([0.0, 1.0], [0.5, 0.5]), 1.0), [1 / (1 + e), e / (1 + e)], atol=1e-15
    )


def test_tilt_moves_mass_to_argmin(rng):
    for _ in range(100):
        sup = random_support(rng)
        wc = worst_case_distribution(sup, float(rng.uniform(0.1, 10)))
        argmin = sup.values == sup.min_value
        assert wc[argmin].sum() > sup.probs[argmin].sum()
        assert abs(wc.sum() - 1) <= 1e-9


def test_tilt_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        worst_case_distribution(ValueSupport([0.0, 1.0], [0.5, 0.5]), -1.0)


# -- brute_force_inner_min -------------------------------------------------------


def test_oracle_singleton():
    assert brute_force_inner_min(ValueSupport([5.0], [1.0]), 0.7) == 5.0


def test_oracle_epsilon_zero_is_nominal():
    sup = ValueSupport([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    assert brute_force_inner_min(sup, 0.0) == pytest.approx(sup.nominal_value, abs=1e-12)


def test_oracle_fixture_three_uniform():
    sup = ValueSupport([0.0, 1.0, 2.0], [1 / 3, 1 / 3, 1 / 3])
    oracle = brute_force_inner_min(sup, 0.05, 0.001)
    assert oracle == pytest.approx(solve_dual(sup, 0.05).robust_value, abs=5e-3 * 3)
    assert oracle >= solve_dual(sup, 0.05).robust_value - 1e-12  # a grid can only do worse than the true min


def test_oracle_matches_naive_enumeration(rng):
    # every grid point scored directly, coarse grid
    for _ in range(20):
        sup = random_support(rng, 3)
        K = 100
        best = math.inf
        for i in range(K + 1):
            for j in range(K + 1 - i):
                p = np.array([i, j, K - i - j]) / K
                if kl_divergence(p, sup.probs) <= 0.2:
                    best = min(best, float(p @ sup.values))
        best = min(best, sup.nominal_value)
        assert brute_force_inner_min(sup, 0.2, 0.01) == pytest.approx(best, abs=1e-12)


def test_oracle_errors():
    with pytest.raises(SupportError):
        brute_force_inner_min(ValueSupport(np.arange(5.0), np.full(5, 0.2)), 0.1)
    with pytest.raises(ValueError):
        brute_force_inner_min(ValueSupport([0.0, 1.0], [0.5, 0.5]), 0.1, grid_step=0.05)
