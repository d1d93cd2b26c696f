"""Confidence-aware imitation learning on tabular MDPs.

Per-pair confidences on a mixed-quality demonstration set are learned jointly
with an adversarial imitation learner: an outer ranking loss over a small
ranked subset steers the confidences through one provisional discriminator step.
"""

from .airl import Discriminator, GeneratorState, disc_loss, generator_update, recovered_reward
from .bilevel import BilevelConfig, run_cail, theorem1_check
from .demos import DemoSet, RankingDataset, Trajectory, build_mixture, build_ranking_subset
from .harness import ExperimentConfig, parse_config, run_experiment, serialize_config
from .mdp import GridSpec, TabularMDP, build_gridworld, expected_return, value_iteration

__all__ = [
    "BilevelConfig", "DemoSet", "Discriminator", "ExperimentConfig", "GeneratorState",
    "GridSpec", "RankingDataset", "TabularMDP", "Trajectory", "build_gridworld",
    "build_mixture", "build_ranking_subset", "disc_loss", "expected_return",
    "generator_update", "parse_config", "recovered_reward", "run_cail", "run_experiment",
    "serialize_config", "theorem1_check", "value_iteration",
]
