"""Brute-force reference computations used to check the fast paths.

Nothing here calls into the routine it verifies: values come from hand-rolled
elimination, explicit loops, finite differences or sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import OccupancyTable, TabularMDP


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting."""
    M = np.array(A, dtype=float)
    x = np.array(b, dtype=float)
    n = len(x)
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if M[p, k] == 0.0:
            raise np.linalg.LinAlgError("singular system")
        if p != k:
            M[[k, p]] = M[[p, k]]
            x[[k, p]] = x[[p, k]]
        for i in range(k + 1, n):
            factor = M[i, k] / M[k, k]
            M[i, k:] -= factor * M[k, k:]
            x[i] -= factor * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - M[k, k + 1:] @ x[k + 1:]) / M[k, k]
    return x


def _policy_matrix(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    S = mdp.n_states
    P = np.zeros((S, S))
    for s in range(S):
        for a in range(mdp.n_actions):
            P[s] += policy[s, a] * mdp.transition[s, a]
    return P


def exact_policy_value(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    P = _policy_matrix(mdp, policy)
    r = np.array([policy[s] @ mdp.reward[s] for s in range(mdp.n_states)])
    return solve_linear(np.eye(mdp.n_states) - mdp.discount * P, r)


def exact_occupancy(mdp: TabularMDP, policy: np.ndarray) -> OccupancyTable:
    """Solve ``d = rho0 + gamma P^T d`` directly, then ``rho = pi * d``."""
    P = _policy_matrix(mdp, policy)
    d = solve_linear(np.eye(mdp.n_states) - mdp.discount * P.T, mdp.initial_dist)
    rho = np.asarray(policy) * d[:, None]
    return OccupancyTable(rho, rho / rho.sum())


def soft_value_sweeps(mdp: TabularMDP, reward: np.ndarray, temperature: float,
                      tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Soft Bellman backups until convergence; returns the Boltzmann policy."""
    R = np.where(mdp.terminal[:, None], 0.0, reward)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = R + mdp.discount * np.einsum("sat,t->sa", mdp.transition, V)
        m = Q.max(axis=1)
        V_new = m + temperature * np.log(np.exp((Q - m[:, None]) / temperature).sum(axis=1))
        done = np.max(np.abs(V_new - V)) <= tol
        V = V_new
        if done:
            break
    Q = R + mdp.discount * np.einsum("sat,t->sa", mdp.transition, V)
    pi = np.exp((Q - Q.max(axis=1, keepdims=True)) / temperature)
    return pi / pi.sum(axis=1, keepdims=True)


def enumerate_best_policy(mdp: TabularMDP):
    """Best deterministic policy by exhaustive search (tiny MDPs only)."""
    import itertools

    best, best_ret = None, -np.inf
    for choice in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        pi = np.zeros((mdp.n_states, mdp.n_actions))
        pi[np.arange(mdp.n_states), choice] = 1.0
        ret = float(mdp.initial_dist @ exact_policy_value(mdp, pi))
        if ret > best_ret + 1e-12:
            best, best_ret = pi, ret
    return best, best_ret


def monte_carlo_return(mdp: TabularMDP, policy: np.ndarray, episodes: int, horizon: int,
                       seed: int) -> tuple[float, float]:
    """Mean and standard error of the discounted return over sampled episodes."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    rng = np.random.default_rng(seed)
    S, A = mdp.n_states, mdp.n_actions
    state = rng.choice(S, size=episodes, p=mdp.initial_dist)
    total = np.zeros(episodes)
    disc = 1.0
    for _ in range(horizon):
        u = rng.random(episodes)
        action = np.argmax(u[:, None] < np.cumsum(policy[state], axis=1), axis=1)
        action = np.minimum(action, A - 1)
        total += disc * mdp.reward[state, action]
        v = rng.random(episodes)
        cdf = np.cumsum(mdp.transition[state, action], axis=1)
        state = np.minimum(np.argmax(v[:, None] < cdf, axis=1), S - 1)
        disc *= mdp.discount
    se = float(total.std(ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0
    return float(total.mean()), se


def discounted_sum(rewards, gamma: float) -> float:
    total, g = 0.0, 1.0
    for r in rewards:
        total += g * r
        g *= gamma
    return total


# -- network and loss references ---------------------------------------------------

def forward_reference(layout, theta: np.ndarray, s: int, a: int) -> float:
    """One sample through the network with an explicit one-hot input vector."""
    x = np.zeros(layout.n_states + layout.n_actions)
    x[s] = 1.0
    x[layout.n_states + a] = 1.0
    k = 0
    widths = layout.widths
    for layer in range(len(widths) - 1):
        n_in, n_out = widths[layer], widths[layer + 1]
        W = theta[k:k + n_in * n_out].reshape(n_out, n_in)
        k += n_in * n_out
        b = theta[k:k + n_out]
        k += n_out
        y = np.array([sum(W[o, i] * x[i] for i in range(n_in) if x[i] != 0.0) + b[o]
                      for o in range(n_out)])
        x = y if layer == len(widths) - 2 else np.tanh(y)
    return float(x[0])


def _log_sigmoid(x: float) -> float:
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def disc_loss_reference(layout, theta, demo_s, demo_a, weights, gen_s, gen_a) -> float:
    demo = sum(w * -_log_sigmoid(forward_reference(layout, theta, s, a))
               for s, a, w in zip(demo_s, demo_a, weights))
    gen = sum(-_log_sigmoid(-forward_reference(layout, theta, s, a))
              for s, a in zip(gen_s, gen_a))
    return demo / len(demo_s) + gen / len(gen_s)


def rk_reference(zi: float, zj: float, indicator: int, eps: float) -> float:
    z = zi - zj
    if abs(z) > eps:
        return max(0.0, -indicator * z)
    return max(0.0, (indicator * z - eps) ** 2 / (4 * eps))


def outer_loss_reference(layout, theta, trajectories, true_returns, gamma, eps) -> float:
    learned = [discounted_sum([forward_reference(layout, theta, s, a)
                               for s, a in zip(t.states, t.actions)], gamma)
               for t in trajectories]
    total = 0.0
    m = len(trajectories)
    for i in range(m):
        for j in range(i + 1, m):
            ind = 1 if true_returns[i] > true_returns[j] else -1
            total += rk_reference(learned[i], learned[j], ind, eps)
    return total


# -- finite differences ------------------------------------------------------------

def fd_pipeline_beta_grad(disc, beta: np.ndarray, batch, outer, mu: float, h: float = 1e-4,
                          indices=None) -> np.ndarray:
    """Central differences of ``beta_i -> L_out(theta - mu grad L_in(theta, beta))``.

    The provisional step is recomputed from scratch with explicit per-sample
    loss derivatives so it shares no code with the analytic path.
    """
    from . import diffnet

    beta = np.asarray(beta, dtype=float)
    idx = range(len(beta)) if indices is None else indices
    n_d, n_g = len(batch.demo), len(batch.gen)
    s = np.concatenate([batch.demo.states, batch.gen.states])
    a = np.concatenate([batch.demo.actions, batch.gen.actions])
    f = diffnet.forward(disc.layout, disc.params, s, a)
    sig = 1.0 / (1.0 + np.exp(-f))

    def pipeline(b):
        w = len(b) * b[batch.indices] / b.sum()
        c = np.concatenate([-w * (1.0 - sig[:n_d]) / n_d, sig[n_d:] / n_g])
        g = sum(ci * diffnet.grad_params(disc.layout, disc.params, [si], [ai], [1.0])
                for si, ai, ci in zip(s, a, c))
        return outer.loss(disc.params - mu * g)

    grad = np.zeros(len(beta))
    for i in idx:
        up, down = beta.copy(), beta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (pipeline(up) - pipeline(down)) / (2.0 * h)
    return grad


def relative_error(x: np.ndarray, ref: np.ndarray) -> float:
    x, ref = np.asarray(x, dtype=float), np.asarray(ref, dtype=float)
    denom = np.linalg.norm(ref)
    diff = np.linalg.norm(x - ref)
    return float(diff / denom) if denom > 0 else float(diff)


# -- ranking-loss smoothness scan --------------------------------------------------

@dataclass(frozen=True)
class SeamScan:
    value_jump: float
    derivative_jump: float
    max_curvature: float
    value_at_zero: float
    curvature_bound: float


def rk_seam_scan(eps: float = 1e-5, resolution: int = 10_000) -> SeamScan:
    """Dense scan of the ranking loss over ``z`` in ``[-3 eps, 3 eps]`` for both indicators.

    Reports the largest value jump across the seams ``z = +-eps`` (adjacent
    floats), the largest mismatch of one-sided difference quotients at the
    seams, and the largest second difference quotient on the grid.
    """
    from .ranking import rk_values

    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    dz = 6.0 * eps / resolution
    z = np.linspace(-3.0 * eps, 3.0 * eps, resolution + 1)
    value_jump = derivative_jump = max_curv = 0.0
    for ind in (1.0, -1.0):
        for seam in (-eps, eps):
            lo, hi = np.nextafter(seam, -np.inf), np.nextafter(seam, np.inf)
            value_jump = max(value_jump, abs(float(rk_values(hi, ind, eps) - rk_values(lo, ind, eps))))
            left = float(rk_values(seam, ind, eps) - rk_values(seam - dz, ind, eps)) / dz
            right = float(rk_values(seam + dz, ind, eps) - rk_values(seam, ind, eps)) / dz
            derivative_jump = max(derivative_jump, abs(right - left))
        v = rk_values(z, ind, eps)
        second = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dz**2
        max_curv = max(max_curv, float(np.max(np.abs(second))))
    return SeamScan(value_jump, derivative_jump, max_curv,
                    float(rk_values(0.0, 1.0, eps)), 1.0 / (2.0 * eps))
