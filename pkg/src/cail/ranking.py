"""Learned trajectory returns and the smoothed margin ranking loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffnet
from .airl import Discriminator
from .demos import RankingDataset, Trajectory


@dataclass(frozen=True)
class RankingLossConfig:
    epsilon: float = 1e-5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def learned_return(disc: Discriminator, traj: Trajectory, gamma: float) -> float:
    f = disc.logits(traj.states, traj.actions)
    return float((gamma ** np.arange(len(traj))) @ f)


def rk_values(z, indicator, eps: float) -> np.ndarray:
    """Margin-0 ranking loss on ``z = eta'_i - eta'_j``, quadratic inside ``|z| <= eps``."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(indicator, dtype=float) * z
    outside = np.maximum(0.0, -y)
    inside = np.maximum(0.0, (y - eps) ** 2 / (4.0 * eps))
    return np.where(np.abs(z) > eps, outside, inside)


def rk_derivative(z, indicator, eps: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    ind = np.asarray(indicator, dtype=float)
    y = ind * z
    outside = np.where(y < 0, -ind, 0.0)
    inside = ind * (y - eps) / (2.0 * eps)
    return np.where(np.abs(z) > eps, outside, inside)


def rk(eta_i: float, eta_j: float, indicator: int, cfg: RankingLossConfig = RankingLossConfig()) -> float:
    if indicator not in (1, -1):
        raise ValueError("indicator must be +1 or -1")
    return float(rk_values(eta_i - eta_j, indicator, cfg.epsilon))


def discount_tables(trajectories, gamma: float, n_states: int, n_actions: int) -> np.ndarray:
    """``G[k, s, a] = sum_t gamma^t [(s_t, a_t) = (s, a)]`` per trajectory."""
    G = np.zeros((len(trajectories), n_states, n_actions))
    for k, t in enumerate(trajectories):
        np.add.at(G[k], (t.states, t.actions), gamma ** np.arange(len(t)))
    return G


def indicator_matrix(true_returns: np.ndarray) -> np.ndarray:
    """+1 where ``eta_i > eta_j``, otherwise -1 (ties included)."""
    r = np.asarray(true_returns)
    return np.where(r[:, None] > r[None, :], 1.0, -1.0)


class OuterObjective:
    """Ranking loss over a fixed ranked subset, evaluated for any discriminator params.

    Learned returns are linear in the logit table, so both the loss and its
    parameter gradient need only one pass over the distinct (s, a) pairs.
    """

    def __init__(self, ranking: RankingDataset, gamma: float, layout: diffnet.Layout,
                 cfg: RankingLossConfig = RankingLossConfig()):
        if len(ranking) < 2:
            raise ValueError("ranking needs at least two entries")
        self.layout = layout
        self.cfg = cfg
        self.G = discount_tables(ranking.trajectories, gamma, layout.n_states, layout.n_actions)
        self.ind = indicator_matrix(ranking.returns)
        m = len(ranking)
        self.iu = np.triu_indices(m, k=1)

    def learned_returns(self, params: np.ndarray) -> np.ndarray:
        f = diffnet.forward_all(self.layout, params)
        return np.einsum("ksa,sa->k", self.G, f)

    def _pair_terms(self, eta):
        i, j = self.iu
        return eta[i] - eta[j], self.ind[i, j]

    def loss(self, params: np.ndarray) -> float:
        z, ind = self._pair_terms(self.learned_returns(params))
        return float(rk_values(z, ind, self.cfg.epsilon).sum())

    def grad(self, params: np.ndarray) -> np.ndarray:
        z, ind = self._pair_terms(self.learned_returns(params))
        dz = rk_derivative(z, ind, self.cfg.epsilon)
        d_eta = np.zeros(self.G.shape[0])
        i, j = self.iu
        np.add.at(d_eta, i, dz)
        np.add.at(d_eta, j, -dz)
        coeff = np.einsum("k,ksa->sa", d_eta, self.G)
        s, a = np.nonzero(coeff)
        if len(s) == 0:
            return np.zeros(self.layout.n_params)
        return diffnet.grad_params(self.layout, params, s, a, coeff[s, a])


def outer_loss(disc: Discriminator, ranking: RankingDataset, gamma: float,
               cfg: RankingLossConfig = RankingLossConfig()) -> float:
    return OuterObjective(ranking, gamma, disc.layout, cfg).loss(disc.params)


def outer_loss_grad_theta(disc: Discriminator, ranking: RankingDataset, gamma: float,
                          cfg: RankingLossConfig = RankingLossConfig()) -> np.ndarray:
    return OuterObjective(ranking, gamma, disc.layout, cfg).grad(disc.params)
