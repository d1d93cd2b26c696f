"""Finite MDPs, gridworld construction and exact dynamic programming."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIONS = ("up", "down", "left", "right")
_MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}

_ROW_TOL = 1e-9


@dataclass(frozen=True)
class TabularMDP:
    """A finite discounted MDP.

    ``terminal`` marks absorbing states at which an episode ends; they must
    self-loop under every action and carry zero reward.
    """

    transition: np.ndarray  # [S, A, S']
    reward: np.ndarray  # [S, A]
    initial_dist: np.ndarray  # [S]
    discount: float
    terminal: np.ndarray = field(default=None)  # [S] bool

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        rho0 = np.asarray(self.initial_dist, dtype=float)
        term = (np.zeros(T.shape[0], dtype=bool) if self.terminal is None
                else np.asarray(self.terminal, dtype=bool))
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", rho0)
        object.__setattr__(self, "terminal", term)
        validate_mdp(self)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_reward(self, reward: np.ndarray) -> "TabularMDP":
        return TabularMDP(self.transition, reward, self.initial_dist,
                          self.discount, self.terminal)


def validate_mdp(mdp: TabularMDP) -> None:
    T, R, rho0 = mdp.transition, mdp.reward, mdp.initial_dist
    if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] < 1 or T.shape[1] < 1:
        raise ValueError(f"transition must have shape [S, A, S], got {T.shape}")
    S, A = T.shape[:2]
    if R.shape != (S, A):
        raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
    if rho0.shape != (S,):
        raise ValueError(f"initial_dist must have shape {(S,)}, got {rho0.shape}")
    if mdp.terminal.shape != (S,):
        raise ValueError("terminal mask has wrong shape")
    if np.any(T < 0) or np.any(T > 1):
        raise ValueError("transition probabilities must lie in [0, 1]")
    if np.max(np.abs(T.sum(axis=2) - 1.0)) > _ROW_TOL:
        raise ValueError("transition rows must sum to 1")
    if np.any(rho0 < 0) or np.any(rho0 > 1) or abs(rho0.sum() - 1.0) > _ROW_TOL:
        raise ValueError("initial_dist must be a probability vector")
    if not np.all(np.isfinite(R)):
        raise ValueError("reward must be finite")
    if not 0.0 <= mdp.discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {mdp.discount}")
    for s in np.flatnonzero(mdp.terminal):
        if not np.allclose(T[s, :, s], 1.0) or np.any(R[s] != 0):
            raise ValueError(f"terminal state {s} must be a zero-reward self-loop")


def validate_policy(policy: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValueError(f"policy must have shape {(n_states, n_actions)}, got {pi.shape}")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > _ROW_TOL:
        raise ValueError("policy rows must be probability vectors")
    return pi


@dataclass(frozen=True)
class GridSpec:
    rows: int = 5
    cols: int = 5
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] = (4, 4)
    obstacles: tuple[tuple[int, int], ...] = ()
    step_reward: float = -0.05
    goal_reward: float = 1.0
    obstacle_reward: float = 0.0
    slip: float = 0.1
    discount: float = 0.95
    goal_absorbing: bool = True


def build_gridworld(spec: GridSpec) -> TabularMDP:
    """Gridworld with four compass moves.

    With probability ``slip`` the executed move is drawn uniformly from all
    four actions. Moving off the grid or into an obstacle leaves the agent in
    place; bumping an obstacle adds ``obstacle_reward``. Entering the goal pays
    ``goal_reward``. Obstacle cells, and the goal when absorbing, are terminal.
    State index is ``row * cols + col``.
    """
    rows, cols = spec.rows, spec.cols
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid must contain at least two cells")
    if not 0.0 <= spec.slip <= 1.0:
        raise ValueError(f"slip probability must lie in [0, 1], got {spec.slip}")
    obstacles = {tuple(o) for o in spec.obstacles}
    for cell in [spec.start, spec.goal, *obstacles]:
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols):
            raise ValueError(f"cell {cell} lies outside the {rows}x{cols} grid")
    if tuple(spec.goal) in obstacles:
        raise ValueError("goal cell cannot be an obstacle")
    if tuple(spec.start) in obstacles:
        raise ValueError("start cell cannot be an obstacle")

    S, A = rows * cols, len(ACTIONS)
    goal = spec.goal[0] * cols + spec.goal[1]
    blocked = np.zeros(S, dtype=bool)
    for r, c in obstacles:
        blocked[r * cols + c] = True

    # deterministic move outcome and bump flag per (cell, move)
    dest = np.zeros((S, A), dtype=int)
    bump = np.zeros((S, A))
    for s in range(S):
        r, c = divmod(s, cols)
        for a, (dr, dc) in _MOVES.items():
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols):
                dest[s, a] = s
            elif blocked[nr * cols + nc]:
                dest[s, a] = s
                bump[s, a] = 1.0
            else:
                dest[s, a] = nr * cols + nc

    # executed-move distribution given the intended action
    mix = np.full((A, A), spec.slip / A) + (1.0 - spec.slip) * np.eye(A)

    T = np.zeros((S, A, S))
    R = np.zeros((S, A))
    terminal = blocked.copy()
    if spec.goal_absorbing:
        terminal[goal] = True
    for s in range(S):
        if terminal[s]:
            T[s, :, s] = 1.0
            continue
        for a in range(A):
            for m in range(A):
                T[s, a, dest[s, m]] += mix[a, m]
            R[s, a] = (spec.step_reward + spec.goal_reward * T[s, a, goal]
                       + spec.obstacle_reward * float(mix[a] @ bump[s]))
    rho0 = np.zeros(S)
    rho0[spec.start[0] * cols + spec.start[1]] = 1.0
    return TabularMDP(T, R, rho0, spec.discount, terminal)


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 100_000):
    """Optimal values and the greedy deterministic policy.

    Ties between actions are broken toward the lowest index.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    T, R, gamma = mdp.transition, mdp.reward, mdp.discount
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = R + gamma * T @ V
        V_new = Q.max(axis=1)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta <= tol:
            break
    Q = R + gamma * T @ V
    return V, greedy_policy(Q)


def greedy_policy(Q: np.ndarray) -> np.ndarray:
    best = Q.max(axis=1, keepdims=True)
    near = Q >= best - 1e-12 * (1.0 + np.abs(best))
    choice = np.argmax(near, axis=1)
    pi = np.zeros_like(Q)
    pi[np.arange(Q.shape[0]), choice] = 1.0
    return pi


def soft_value_iteration(mdp: TabularMDP, reward_override: np.ndarray | None = None,
                         temperature: float = 1.0, tol: float = 1e-8,
                         max_iter: int = 100_000) -> np.ndarray:
    """Boltzmann policy ``pi(a|s) ~ exp(Q_soft(s, a) / temperature)``.

    Terminal states keep zero reward, even under an override, but still
    collect the entropy bonus of their self-loop, so they come out uniform.
    """
    return soft_policy_and_value(mdp, reward_override, temperature, tol, max_iter)[0]


def soft_policy_and_value(mdp: TabularMDP, reward_override: np.ndarray | None = None,
                          temperature: float = 1.0, tol: float = 1e-8,
                          max_iter: int = 10_000, init_value: np.ndarray | None = None):
    """Solve the soft Bellman equation by soft policy iteration.

    Each round evaluates the current Boltzmann policy exactly (reward plus
    ``temperature`` times its entropy) and then re-derives the policy from the
    soft Q-values; this is Newton's method on the soft Bellman operator and
    stops once successive values move by at most ``tol``. ``init_value`` only
    picks the starting policy.
    """
    if temperature <= 0 or tol <= 0:
        raise ValueError("temperature and tol must be positive")
    S, A = mdp.n_states, mdp.n_actions
    T2, gamma = mdp.transition.reshape(S * A, S), mdp.discount
    R = mdp.reward if reward_override is None else np.asarray(reward_override, dtype=float)
    if R.shape != (S, A):
        raise ValueError("reward override has the wrong shape")
    R = np.where(mdp.terminal[:, None], 0.0, R)
    V = np.zeros(S) if init_value is None else np.asarray(init_value, dtype=float)
    eye = np.eye(S)
    for _ in range(max_iter):
        pi = _boltzmann(R + gamma * (T2 @ V).reshape(S, A), temperature)
        entropy = -np.sum(pi * np.log(np.clip(pi, 1e-300, None)), axis=1)
        r_pi = (pi * R).sum(axis=1) + temperature * entropy
        P = np.einsum("sa,sat->st", pi, mdp.transition)
        V_new = np.linalg.solve(eye - gamma * P, r_pi)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta <= tol:
            break
    return _boltzmann(R + gamma * (T2 @ V).reshape(S, A), temperature), V


def _boltzmann(Q: np.ndarray, temperature: float) -> np.ndarray:
    z = Q / temperature
    z -= z.max(axis=1, keepdims=True)
    pi = np.exp(z)
    return pi / pi.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class OccupancyTable:
    rho: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_rho(cls, rho: np.ndarray) -> "OccupancyTable":
        rho = np.clip(rho, 0.0, None)
        return cls(rho, rho / rho.sum())


def occupancy_measure(mdp: TabularMDP, policy: np.ndarray, tol: float = 1e-12,
                      max_iter: int = 100_000) -> OccupancyTable:
    """Discounted state-action visitation by fixed-point iteration.

    Iterates ``d = rho0 + gamma * P_pi^T d`` for the discounted state
    visitation ``d`` and returns ``rho(s, a) = pi(a|s) d(s)``.
    """
    pi = validate_policy(policy, mdp.n_states, mdp.n_actions)
    P = np.einsum("sa,sat->st", pi, mdp.transition)
    d = mdp.initial_dist.copy()
    for _ in range(max_iter):
        d_new = mdp.initial_dist + mdp.discount * (P.T @ d)
        delta = np.max(np.abs(d_new - d))
        d = d_new
        if delta <= tol:
            break
    return OccupancyTable.from_rho(pi * d[:, None])


def policy_value(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    pi = validate_policy(policy, mdp.n_states, mdp.n_actions)
    P = np.einsum("sa,sat->st", pi, mdp.transition)
    r = (pi * mdp.reward).sum(axis=1)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P, r)


def expected_return(mdp: TabularMDP, policy: np.ndarray) -> float:
    """Discounted return of ``policy`` from the initial distribution."""
    return float(mdp.initial_dist @ policy_value(mdp, policy))


def uniform_policy(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
