import numpy as np
import pytest

from cail import oracle
from cail.checks import random_mdp, random_policy
from cail.mdp import (TabularMDP, expected_return, occupancy_measure, policy_value,
                      uniform_policy, value_iteration)
from conftest import self_loop


def test_solve_linear_matches_numpy():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(7, 7)) + 7 * np.eye(7)
    b = rng.normal(size=7)
    np.testing.assert_allclose(oracle.solve_linear(A, b), np.linalg.solve(A, b), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        oracle.solve_linear(np.zeros((2, 2)), np.ones(2))


def test_exact_policy_value_examples(grid5):
    zero = TabularMDP(grid5.transition, np.zeros_like(grid5.reward), grid5.initial_dist, 0.95,
                      grid5.terminal)
    assert not np.any(oracle.exact_policy_value(zero, uniform_policy(zero)))
    mdp = self_loop(1.0, 0.5)
    assert oracle.exact_policy_value(mdp, np.ones((1, 1)))[0] == pytest.approx(2.0, abs=1e-15)


def test_exact_value_agrees_with_iteration(grid5):
    V, pi = value_iteration(grid5, tol=1e-12)
    np.testing.assert_allclose(oracle.exact_policy_value(grid5, pi), V, atol=1e-9)


def test_exact_occupancy_agrees_with_fast_path():
    rng = np.random.default_rng(1)
    for _ in range(5):
        mdp = random_mdp(rng, int(rng.integers(2, 12)), int(rng.integers(1, 5)))
        pi = random_policy(rng, mdp.n_states, mdp.n_actions)
        ref, fast = oracle.exact_occupancy(mdp, pi), occupancy_measure(mdp, pi)
        np.testing.assert_allclose(fast.rho, ref.rho, atol=1e-10)
        np.testing.assert_allclose(fast.normalized, ref.normalized, atol=1e-10)
        assert ref.rho.sum() == pytest.approx(1 / (1 - mdp.discount), rel=1e-9)
        np.testing.assert_allclose(policy_value(mdp, pi), oracle.exact_policy_value(mdp, pi),
                                   atol=1e-9)


def test_enumeration_agrees_with_value_iteration(grid3_center):
    # keep two actions so the search over 2**9 policies stays small
    sub = TabularMDP(grid3_center.transition[:, :2], grid3_center.reward[:, :2],
                     grid3_center.initial_dist, grid3_center.discount, grid3_center.terminal)
    _, best = oracle.enumerate_best_policy(sub)
    _, pi = value_iteration(sub, tol=1e-12)
    assert expected_return(sub, pi) == pytest.approx(best, abs=1e-8)


def test_monte_carlo_examples(grid3):
    mdp = self_loop(1.0, 0.5)
    mean, se = oracle.monte_carlo_return(mdp, np.ones((1, 1)), 10, 60, 0)
    assert se == 0.0 and mean == pytest.approx(2.0, abs=1e-12)
    pi = uniform_policy(grid3)
    assert oracle.monte_carlo_return(grid3, pi, 500, 50, 3) == oracle.monte_carlo_return(grid3, pi, 500, 50, 3)
    mean, se = oracle.monte_carlo_return(grid3, pi, 20_000, 400, 5)
    assert abs(mean - expected_return(grid3, pi)) <= 3 * se
    with pytest.raises(ValueError):
        oracle.monte_carlo_return(grid3, pi, 0, 10, 0)


def test_discounted_sum():
    assert oracle.discounted_sum([1.0, 1.0, 1.0], 0.5) == 1.75
    assert oracle.discounted_sum([], 0.9) == 0.0


def test_rk_reference_examples():
    eps = 1e-5
    assert oracle.rk_reference(0.0, 0.0, 1, eps) == eps / 4
    assert oracle.rk_reference(1.0, 0.0, 1, eps) == 0.0
    assert oracle.rk_reference(0.0, 1.0, 1, eps) == 1.0
    assert oracle.rk_reference(0.0, 1.0, -1, eps) == 0.0


def test_seam_scan_meets_bounds():
    scan = oracle.rk_seam_scan(1e-5, 10_000)
    assert scan.value_jump <= 1e-12
    assert scan.derivative_jump <= 1e-3
    assert scan.max_curvature <= 1.1 * scan.curvature_bound
    assert scan.value_at_zero == 1e-5 / 4
    with pytest.raises(ValueError):
        oracle.rk_seam_scan(1e-5, 10)


def test_fd_pipeline_trivial_cases():
    from cail import diffnet
    from cail.airl import Discriminator, Pairs
    from cail.bilevel import Batch
    from cail.demos import RankingDataset, Trajectory
    from cail.ranking import OuterObjective

    layout = diffnet.Layout(4, 2, (5, 5))
    disc = Discriminator(layout, 2.0 * diffnet.init_params(layout, 0))
    trajs = (Trajectory([0, 1], [0, 1]), Trajectory([2, 3], [1, 0]))
    outer = OuterObjective(RankingDataset(np.arange(2), np.array([1.0, 0.0]), trajs), 0.9, layout)
    batch = Batch(np.array([0, 1, 1]), Pairs(np.array([0, 1, 1]), np.array([0, 1, 1])),
                  Pairs(np.array([2, 3]), np.array([1, 0])))
    beta = np.array([0.7, 1.3])
    assert not np.any(oracle.fd_pipeline_beta_grad(disc, beta, batch, outer, 0.0))
    single = Batch(np.array([0, 0]), Pairs(np.array([0, 0]), np.array([0, 0])), batch.gen)
    np.testing.assert_allclose(oracle.fd_pipeline_beta_grad(disc, np.array([2.0]), single, outer, 0.5),
                               0.0, atol=1e-12)


def test_relative_error():
    assert oracle.relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert oracle.relative_error([0.0, 2.0], [0.0, 1.0]) == 1.0
    assert oracle.relative_error([0.5], [0.0]) == 0.5
