"""Demonstration mixtures with graded optimality and the ranked subset."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import TabularMDP, soft_value_iteration, validate_policy

ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    source_level: int = 0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        if s.ndim != 1 or s.shape != a.shape or len(s) < 1:
            raise ValueError("trajectory needs equal-length, non-empty state/action sequences")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states.tolist(), self.actions.tolist()))

    def check(self, n_states: int, n_actions: int) -> None:
        if self.states.min() < 0 or self.states.max() >= n_states:
            raise ValueError("state index out of range")
        if self.actions.min() < 0 or self.actions.max() >= n_actions:
            raise ValueError("action index out of range")


class DemoSet:
    """Trajectories plus a flat index over every demonstrated (s, a) slot."""

    def __init__(self, trajectories: Sequence[Trajectory]):
        self.trajectories = list(trajectories)
        if not self.trajectories:
            raise ValueError("a DemoSet needs at least one trajectory")
        lengths = [len(t) for t in self.trajectories]
        self.pair_traj = np.repeat(np.arange(len(lengths)), lengths)
        self.pair_step = np.concatenate([np.arange(n) for n in lengths])
        self.pair_states = np.concatenate([t.states for t in self.trajectories])
        self.pair_actions = np.concatenate([t.actions for t in self.trajectories])
        self.pair_level = np.concatenate(
            [np.full(len(t), t.source_level) for t in self.trajectories])
        self.traj_offsets = np.concatenate([[0], np.cumsum(lengths)])

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_states)

    def pairs_of(self, traj: int) -> np.ndarray:
        return np.arange(self.traj_offsets[traj], self.traj_offsets[traj + 1])

    @property
    def levels(self) -> np.ndarray:
        return np.unique(self.pair_level)


@dataclass(frozen=True)
class RankingDataset:
    """Ranked trajectories with their true returns, best first.

    ``indices`` refer back into the DemoSet the subset was drawn from.
    """

    indices: np.ndarray
    returns: np.ndarray
    trajectories: tuple[Trajectory, ...]
    fraction: float = 1.0

    def __len__(self) -> int:
        return len(self.indices)


def make_behavior_policies(mdp: TabularMDP, temperatures: Sequence[float | str],
                           adversarial_temperature: float = 0.01) -> list[np.ndarray]:
    """One soft-optimal Boltzmann policy per temperature, in input order.

    The literal ``"adversarial"`` yields a low-temperature policy for the
    negated reward.
    """
    policies = []
    for t in temperatures:
        if t == ADVERSARIAL:
            policies.append(soft_value_iteration(mdp, -mdp.reward, adversarial_temperature))
        else:
            if float(t) <= 0:
                raise ValueError("temperatures must be positive")
            policies.append(soft_value_iteration(mdp, temperature=float(t)))
    return policies


def _cumulative(probs: np.ndarray) -> np.ndarray:
    c = np.cumsum(probs, axis=-1)
    c[..., -1] = 1.0
    return c


def rollout(mdp: TabularMDP, policy: np.ndarray, count: int, horizon: int,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run ``count`` episodes in lockstep.

    Returns states and actions of shape [count, horizon] and per-episode
    lengths. An episode stops at the horizon or once it reaches a terminal
    state; a terminal start state still records one step.
    """
    pi_cum = _cumulative(policy)
    T_cum = _cumulative(mdp.transition)
    s = np.searchsorted(_cumulative(mdp.initial_dist), rng.random(count), side="right")
    states = np.zeros((count, horizon), dtype=np.int64)
    actions = np.zeros((count, horizon), dtype=np.int64)
    lengths = np.zeros(count, dtype=np.int64)
    alive = np.ones(count, dtype=bool)
    for t in range(horizon):
        u_a, u_s = rng.random(count), rng.random(count)
        a = (u_a[:, None] > pi_cum[s]).sum(axis=1)
        states[alive, t] = s[alive]
        actions[alive, t] = a[alive]
        lengths[alive] += 1
        nxt = (u_s[:, None] > T_cum[s, a]).sum(axis=1)
        alive &= ~mdp.terminal[nxt]
        s = nxt
        if not alive.any():
            break
    return states, actions, lengths


def sample_trajectories(mdp: TabularMDP, policy: np.ndarray, count: int, horizon: int,
                        seed: int | np.random.Generator, source_level: int = 0) -> list[Trajectory]:
    if count < 1 or horizon < 1:
        raise ValueError("count and horizon must be at least 1")
    pi = validate_policy(policy, mdp.n_states, mdp.n_actions)
    rng = np.random.default_rng(seed)
    states, actions, lengths = rollout(mdp, pi, count, horizon, rng)
    return [Trajectory(states[i, :n], actions[i, :n], source_level)
            for i, n in enumerate(lengths)]


def trajectory_return(mdp: TabularMDP, traj: Trajectory) -> float:
    discounts = mdp.discount ** np.arange(len(traj))
    return float(discounts @ mdp.reward[traj.states, traj.actions])


def mixture_counts(proportions: Sequence[float], total: int) -> list[int]:
    props = np.asarray(proportions, dtype=float)
    if np.any(props < 0):
        raise ValueError("proportions must be nonnegative")
    if abs(props.sum() - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    counts = [int(math.floor(p * total + 1e-9)) for p in props]
    counts[0] += total - sum(counts)
    return counts


def build_mixture(mdp: TabularMDP, policies: Sequence[np.ndarray],
                  proportions: Sequence[float], total: int, horizon: int,
                  seed: int, levels: Sequence[int] | None = None) -> DemoSet:
    """Draw ``floor(p * total)`` trajectories per policy.

    The remainder goes to the first policy. Trajectories of policy
    ``k`` are tagged with ``levels[k]`` (default ``k``).
    """
    if len(policies) != len(proportions):
        raise ValueError("one proportion per policy is required")
    counts = mixture_counts(proportions, total)
    levels = list(range(len(policies))) if levels is None else list(levels)
    seeds = np.random.SeedSequence(seed).spawn(len(policies))
    trajectories: list[Trajectory] = []
    for pi, n, level, ss in zip(policies, counts, levels, seeds):
        if n:
            trajectories += sample_trajectories(mdp, pi, n, horizon,
                                                np.random.default_rng(ss), level)
    return DemoSet(trajectories)


def build_ranking_subset(demos: DemoSet, mdp: TabularMDP, fraction: float, seed: int,
                         stratified: bool = False) -> RankingDataset:
    """Sample ``ceil(fraction * |demos|)`` trajectories and sort them by true return.

    Exact return ties are ordered by trajectory index. With ``stratified`` the
    draw is spread evenly over source levels (remainder to the lowest levels).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"ranking fraction must lie in (0, 1], got {fraction}")
    m = math.ceil(fraction * len(demos) - 1e-12)
    if m < 2:
        raise ValueError(f"ranking subset of size {m} admits no comparisons")
    rng = np.random.default_rng(seed)
    if stratified:
        traj_levels = np.array([t.source_level for t in demos.trajectories])
        groups = [np.flatnonzero(traj_levels == lv) for lv in np.unique(traj_levels)]
        base, extra = divmod(m, len(groups))
        picked = []
        for k, g in enumerate(groups):
            take = min(len(g), base + (k < extra))
            picked.append(rng.choice(g, size=take, replace=False))
        chosen = np.concatenate(picked)
    else:
        chosen = rng.choice(len(demos), size=m, replace=False)
    returns = np.array([trajectory_return(mdp, demos.trajectories[i]) for i in chosen])
    order = np.lexsort((chosen, -returns))
    idx = chosen[order]
    return RankingDataset(idx, returns[order],
                          tuple(demos.trajectories[i] for i in idx), fraction)


def format_demos(demos: DemoSet, mdp: TabularMDP, subset: np.ndarray | None = None) -> str:
    """One trajectory per line: ``index<TAB>level<TAB>return<TAB>(s,a) (s,a) ...``."""
    idx = range(len(demos)) if subset is None else subset
    lines = ["# index\tlevel\treturn\tsteps"]
    for i in idx:
        t = demos.trajectories[i]
        steps = " ".join(f"({s},{a})" for s, a in t.steps)
        lines.append(f"{i}\t{t.source_level}\t{trajectory_return(mdp, t):.17g}\t{steps}")
    return "\n".join(lines) + "\n"


def parse_demos(text: str) -> DemoSet:
    trajectories = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        _, level, _, steps = line.split("\t")
        pairs = [tuple(map(int, p.strip("()").split(","))) for p in steps.split()]
        s, a = zip(*pairs)
        trajectories.append(Trajectory(np.array(s), np.array(a), int(level)))
    return DemoSet(trajectories)
