"""Inner imitation learner: sigmoid discriminator and a tabular MaxEnt generator."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import diffnet
from .demos import rollout
from .mdp import TabularMDP, soft_policy_and_value


@dataclass(frozen=True)
class Discriminator:
    """``D(s, a) = sigmoid(f(s, a))`` with ``f`` the diffnet logit."""

    layout: diffnet.Layout
    params: np.ndarray

    def logits(self, s, a) -> np.ndarray:
        return diffnet.forward(self.layout, self.params, s, a)

    def prob(self, s, a) -> np.ndarray:
        return _sigmoid(self.logits(s, a))

    def reward_table(self) -> np.ndarray:
        return diffnet.forward_all(self.layout, self.params)

    def with_params(self, params: np.ndarray) -> "Discriminator":
        return Discriminator(self.layout, params)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class Pairs:
    states: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return len(self.states)


def disc_loss(disc: Discriminator, demo: Pairs, weights: np.ndarray, gen: Pairs) -> float:
    """Confidence-weighted discriminator cross-entropy.

    ``mean_i w_i * -log D(demo_i) + mean_j -log(1 - D(gen_j))``.
    """
    f_d = disc.logits(demo.states, demo.actions)
    f_g = disc.logits(gen.states, gen.actions)
    demo_term = np.sum(np.asarray(weights) * np.logaddexp(0.0, -f_d)) / len(demo)
    gen_term = np.sum(np.logaddexp(0.0, f_g)) / len(gen)
    return float(demo_term + gen_term)


def disc_loss_coeffs(disc: Discriminator, demo: Pairs, weights: np.ndarray,
                     gen: Pairs) -> tuple[np.ndarray, np.ndarray]:
    """d(disc_loss)/d(logit) per demo sample and per generator sample."""
    D_d = disc.prob(demo.states, demo.actions)
    D_g = disc.prob(gen.states, gen.actions)
    return -np.asarray(weights) * (1.0 - D_d) / len(demo), D_g / len(gen)


def disc_loss_grad(disc: Discriminator, demo: Pairs, weights: np.ndarray, gen: Pairs) -> np.ndarray:
    c_d, c_g = disc_loss_coeffs(disc, demo, weights, gen)
    s = np.concatenate([demo.states, gen.states])
    a = np.concatenate([demo.actions, gen.actions])
    return diffnet.grad_params(disc.layout, disc.params, s, a, np.concatenate([c_d, c_g]))


def recovered_reward(disc: Discriminator, s, a) -> np.ndarray:
    """``log D - log(1 - D)``, which equals the logit exactly."""
    return disc.logits(s, a)


@dataclass(frozen=True)
class GeneratorState:
    policy: np.ndarray
    damping: float = 0.3
    temperature: float = 0.1
    # last soft values, kept only to warm-start the next planning call
    soft_value: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def generator_update(mdp: TabularMDP, disc: Discriminator, gen: GeneratorState) -> GeneratorState:
    """Damped step toward the MaxEnt-optimal policy for the recovered reward."""
    if gen.damping == 0.0:
        return gen
    target, V = soft_policy_and_value(mdp, disc.reward_table(), gen.temperature,
                                      init_value=gen.soft_value)
    pi = (1.0 - gen.damping) * gen.policy + gen.damping * target
    pi /= pi.sum(axis=1, keepdims=True)
    return replace(gen, policy=pi, soft_value=V)


def generator_batch(gen: GeneratorState, mdp: TabularMDP, batch_size: int, horizon: int,
                    rng: np.random.Generator, episodes: int = 32) -> Pairs:
    """Roll out ``episodes`` generator episodes and resample ``batch_size`` of their pairs."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    states, actions, lengths = rollout(mdp, gen.policy, episodes, horizon, rng)
    mask = np.arange(horizon)[None, :] < lengths[:, None]
    pool_s, pool_a = states[mask], actions[mask]
    pick = rng.integers(0, len(pool_s), size=batch_size)
    return Pairs(pool_s[pick], pool_a[pick])
