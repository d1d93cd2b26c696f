import numpy as np
import pytest

from cail.mdp import GridSpec, TabularMDP, build_gridworld


@pytest.fixture(scope="session")
def grid5():
    return build_gridworld(GridSpec())


@pytest.fixture(scope="session")
def grid3_center():
    return build_gridworld(GridSpec(rows=3, cols=3, goal=(2, 2), obstacles=((1, 1),)))


@pytest.fixture(scope="session")
def grid3():
    return build_gridworld(GridSpec(rows=3, cols=3, goal=(2, 2)))


@pytest.fixture(scope="session")
def corridor():
    """1x2 deterministic grid: start in cell 0, goal in cell 1."""
    return build_gridworld(GridSpec(rows=1, cols=2, start=(0, 0), goal=(0, 1), slip=0.0))


def self_loop(reward=1.0, gamma=0.5, n_actions=1):
    return TabularMDP(np.ones((1, n_actions, 1)), np.full((1, n_actions), reward), np.ones(1), gamma)
