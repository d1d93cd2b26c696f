import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cail import oracle
from cail.demos import (ADVERSARIAL, DemoSet, Trajectory, build_mixture, build_ranking_subset,
                        format_demos, make_behavior_policies, mixture_counts, parse_demos,
                        sample_trajectories, trajectory_return)
from cail.mdp import (ACTIONS, TabularMDP, expected_return, soft_value_iteration, uniform_policy,
                      value_iteration)


def test_near_optimal_level_close_to_optimal(grid5):
    _, pi_star = value_iteration(grid5)
    (pi,) = make_behavior_policies(grid5, [1e-3])
    best = expected_return(grid5, pi_star)
    assert abs(expected_return(grid5, pi) - best) <= 0.01 * abs(best)


def test_hot_level_is_near_uniform(grid5):
    (pi,) = make_behavior_policies(grid5, [1e6])
    assert np.max(np.abs(pi - 0.25)) <= 1e-3


def test_levels_ordered_by_temperature(grid5):
    pols = make_behavior_policies(grid5, [1e-3, 0.3, 1.0, 3.0, 1e6])
    returns = [oracle.exact_policy_value(grid5, p) @ grid5.initial_dist for p in pols]
    assert all(a >= b for a, b in zip(returns, returns[1:]))


def test_adversarial_level_is_worst(grid5):
    pols = make_behavior_policies(grid5, [0.07, ADVERSARIAL, 1e6])
    r = [expected_return(grid5, p) for p in pols]
    assert r[1] < r[2] < r[0]
    with pytest.raises(ValueError):
        make_behavior_policies(grid5, [0.0])


def test_deterministic_corridor_trajectories_identical(corridor):
    right = np.zeros((2, 4))
    right[:, ACTIONS.index("right")] = 1.0
    trajs = sample_trajectories(corridor, right, 20, 10, seed=3)
    assert all(t.steps == [(0, ACTIONS.index("right"))] for t in trajs)


def test_sampling_is_seed_deterministic(grid5):
    pi = soft_value_iteration(grid5, temperature=0.1)
    a = sample_trajectories(grid5, pi, 100, 50, seed=9)
    b = sample_trajectories(grid5, pi, 100, 50, seed=9)
    assert all(np.array_equal(x.states, y.states) and np.array_equal(x.actions, y.actions)
               for x, y in zip(a, b))


def test_optimal_rollouts_match_exact_return(grid5):
    _, pi = value_iteration(grid5)
    trajs = sample_trajectories(grid5, pi, 4000, 50, seed=2)
    returns = np.array([trajectory_return(grid5, t) for t in trajs])
    se = returns.std(ddof=1) / np.sqrt(len(returns))
    assert abs(returns.mean() - expected_return(grid5, pi)) <= 3 * se + 0.95**50


def test_trajectories_stop_at_the_goal(grid5):
    trajs = sample_trajectories(grid5, uniform_policy(grid5), 50, 50, seed=1)
    for t in trajs:
        assert not grid5.terminal[t.states].any()
        assert len(t) <= 50


def test_trajectory_return_closed_forms():
    mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), np.ones(1), 0.5)
    assert trajectory_return(mdp, Trajectory([0, 0, 0], [0, 0, 0])) == 1.75
    zero = mdp.with_reward(np.zeros((1, 1)))
    assert trajectory_return(zero, Trajectory([0, 0], [0, 0])) == 0.0


def test_trajectory_return_matches_independent_sum(grid5):
    rng = np.random.default_rng(0)
    t = Trajectory(rng.integers(0, 25, size=30), rng.integers(0, 4, size=30))
    ref = oracle.discounted_sum(grid5.reward[t.states, t.actions].tolist(), grid5.discount)
    assert trajectory_return(grid5, t) == pytest.approx(ref, abs=1e-12)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([], [])
    with pytest.raises(ValueError):
        Trajectory([0, 1], [0])
    with pytest.raises(ValueError):
        Trajectory([0, 9], [0, 0]).check(5, 4)


def test_mixture_counts():
    assert mixture_counts([0.2] * 5, 200) == [40] * 5
    assert mixture_counts([0.5, 0.5], 3) == [2, 1]
    with pytest.raises(ValueError):
        mixture_counts([1.2, -0.2], 10)
    with pytest.raises(ValueError):
        mixture_counts([0.5, 0.4], 10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=6), st.integers(1, 500))
def test_mixture_counts_sum_to_total(weights, total):
    props = np.array(weights, dtype=float) / sum(weights)
    props[-1] = 1.0 - props[:-1].sum()
    counts = mixture_counts(props, total)
    assert sum(counts) == total and min(counts) >= 0


def test_reference_mixture(grid5):
    pols = make_behavior_policies(grid5, [0.001, 0.045, 0.06, 0.07, ADVERSARIAL])
    demos = build_mixture(grid5, pols, [0.2] * 5, 200, 50, seed=0)
    assert len(demos) == 200
    levels = np.array([t.source_level for t in demos.trajectories])
    assert np.bincount(levels).tolist() == [40] * 5


def test_single_suboptimal_level(grid5):
    pols = make_behavior_policies(grid5, [ADVERSARIAL])
    demos = build_mixture(grid5, pols, [1.0], 10, 20, seed=0)
    assert {t.source_level for t in demos.trajectories} == {0}


def test_pair_index_covers_every_slot(grid5):
    pols = make_behavior_policies(grid5, [0.05, 1.0])
    demos = build_mixture(grid5, pols, [0.5, 0.5], 30, 20, seed=4)
    slots = set(zip(demos.pair_traj.tolist(), demos.pair_step.tolist()))
    assert len(slots) == demos.n_pairs == sum(len(t) for t in demos.trajectories)
    for k in range(demos.n_pairs):
        t = demos.trajectories[demos.pair_traj[k]]
        assert t.states[demos.pair_step[k]] == demos.pair_states[k]
        assert t.actions[demos.pair_step[k]] == demos.pair_actions[k]


def test_ranking_subset(grid5):
    pols = make_behavior_policies(grid5, [0.001, 0.06, ADVERSARIAL])
    demos = build_mixture(grid5, pols, [0.4, 0.3, 0.3], 200, 50, seed=1)
    ranking = build_ranking_subset(demos, grid5, 0.05, seed=2)
    assert len(ranking) == 10
    assert np.all(np.diff(ranking.returns) <= 0)
    for i, r in zip(ranking.indices, ranking.returns):
        assert trajectory_return(grid5, demos.trajectories[i]) == r
    full = build_ranking_subset(demos, grid5, 1.0, seed=0)
    assert sorted(full.indices.tolist()) == list(range(200))
    assert np.all(np.diff(full.returns) <= 0)


def test_ranking_ties_break_by_index(corridor):
    right = np.zeros((2, 4))
    right[:, ACTIONS.index("right")] = 1.0
    demos = DemoSet(sample_trajectories(corridor, right, 6, 5, seed=0))
    ranking = build_ranking_subset(demos, corridor, 1.0, seed=0)
    assert ranking.indices.tolist() == list(range(6))


def test_ranking_rejects_tiny_subsets(grid5):
    demos = build_mixture(grid5, [uniform_policy(grid5)], [1.0], 10, 10, seed=0)
    with pytest.raises(ValueError):
        build_ranking_subset(demos, grid5, 0.1, seed=0)
    with pytest.raises(ValueError):
        build_ranking_subset(demos, grid5, 0.0, seed=0)


def test_stratified_ranking_spreads_levels(grid5):
    pols = make_behavior_policies(grid5, [0.001, 0.06, ADVERSARIAL, 1.0])
    demos = build_mixture(grid5, pols, [0.25] * 4, 200, 50, seed=0)
    ranking = build_ranking_subset(demos, grid5, 0.04, seed=0, stratified=True)
    levels = [t.source_level for t in ranking.trajectories]
    assert sorted(np.bincount(levels).tolist()) == [2, 2, 2, 2]


def test_demo_text_round_trip(grid5):
    pols = make_behavior_policies(grid5, [0.05, ADVERSARIAL])
    demos = build_mixture(grid5, pols, [0.5, 0.5], 8, 15, seed=5)
    back = parse_demos(format_demos(demos, grid5))
    assert len(back) == len(demos)
    for a, b in zip(demos.trajectories, back.trajectories):
        assert a.steps == b.steps and a.source_level == b.source_level
