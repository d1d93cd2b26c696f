"""Small tanh MLP over one-hot (state, action) features with exact gradients.

Parameters live in one flat float array; :class:`Layout` knows how to slice
it into per-layer weights. Every function is pure in the parameter array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Layout:
    n_states: int
    n_actions: int
    hidden: tuple[int, ...] = (100, 100)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.n_states + self.n_actions, *self.hidden, 1)

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        w = self.widths
        return [((w[k + 1], w[k]), (w[k + 1],)) for k in range(len(w) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for (o, i), _ in self.shapes)

    def unpack(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        layers, k = [], 0
        for (o, i), _ in self.shapes:
            W = theta[k:k + o * i].reshape(o, i)
            k += o * i
            b = theta[k:k + o]
            k += o
            layers.append((W, b))
        return layers

    def header(self) -> str:
        return (f"layout n_states={self.n_states} n_actions={self.n_actions} "
                f"hidden={','.join(map(str, self.hidden))}")

    @classmethod
    def from_header(cls, line: str) -> "Layout":
        fields = dict(tok.split("=", 1) for tok in line.split()[1:])
        hidden = tuple(int(h) for h in fields["hidden"].split(",") if h)
        return cls(int(fields["n_states"]), int(fields["n_actions"]), hidden)


def init_params(layout: Layout, seed: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for (o, i), _ in layout.shapes:
        r = 1.0 / np.sqrt(i)
        parts.append(rng.uniform(-r, r, size=o * i))
        parts.append(rng.uniform(-r, r, size=o))
    return np.concatenate(parts)


def _check_indices(layout: Layout, s: np.ndarray, a: np.ndarray):
    s = np.atleast_1d(np.asarray(s, dtype=np.int64))
    a = np.atleast_1d(np.asarray(a, dtype=np.int64))
    if s.shape != a.shape:
        raise ValueError("state and action batches differ in shape")
    if s.size and (s.min() < 0 or s.max() >= layout.n_states):
        raise IndexError("state index out of range")
    if a.size and (a.min() < 0 or a.max() >= layout.n_actions):
        raise IndexError("action index out of range")
    return s, a


def _onehot(layout: Layout, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    X = np.zeros((len(s), layout.n_states + layout.n_actions))
    rows = np.arange(len(s))
    X[rows, s] = 1.0
    X[rows, layout.n_states + a] = 1.0
    return X


def _unique_pairs(layout: Layout, s: np.ndarray, a: np.ndarray):
    """Distinct (s, a) keys and the inverse map back to the batch."""
    keys, inverse = np.unique(s * layout.n_actions + a, return_inverse=True)
    us, ua = np.divmod(keys, layout.n_actions)
    return us, ua, inverse.reshape(-1)


def _forward_trace(layers, X):
    z = X @ layers[0][0].T + layers[0][1]
    acts = []
    for W, b in layers[1:]:
        h = np.tanh(z)
        acts.append(h)
        z = h @ W.T + b
    return acts, z[:, 0]


def forward(layout: Layout, theta: np.ndarray, s, a) -> np.ndarray:
    """Logits ``f(s, a)`` for a batch of index pairs."""
    s, a = _check_indices(layout, s, a)
    if s.size == 0:
        return np.zeros(0)
    us, ua, inv = _unique_pairs(layout, s, a)
    return _forward_trace(layout.unpack(theta), _onehot(layout, us, ua))[1][inv]


def forward_all(layout: Layout, theta: np.ndarray) -> np.ndarray:
    """Logit table of shape [n_states, n_actions]."""
    s, a = np.divmod(np.arange(layout.n_states * layout.n_actions), layout.n_actions)
    return forward(layout, theta, s, a).reshape(layout.n_states, layout.n_actions)


def grad_params(layout: Layout, theta: np.ndarray, s, a, coeffs) -> np.ndarray:
    """Gradient of ``sum_i coeffs[i] * f(s_i, a_i)`` by reverse accumulation.

    Repeated pairs are merged first, so cost scales with distinct pairs.
    """
    s, a = _check_indices(layout, s, a)
    c = np.broadcast_to(np.asarray(coeffs, dtype=float), s.shape)
    if s.size == 0:
        return np.zeros(layout.n_params)
    us, ua, inv = _unique_pairs(layout, s, a)
    c = np.bincount(inv, weights=c, minlength=len(us))
    layers = layout.unpack(theta)
    X = _onehot(layout, us, ua)
    acts, _ = _forward_trace(layers, X)
    grads = [None] * len(layers)
    delta = c[:, None]  # d/d(output pre-activation)
    for k in range(len(layers) - 1, 0, -1):
        W, _ = layers[k]
        h = acts[k - 1]
        grads[k] = (delta.T @ h, delta.sum(axis=0))
        delta = (delta @ W) * (1.0 - h * h)
    grads[0] = (delta.T @ X, delta.sum(axis=0))
    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def directional_derivative(layout: Layout, theta: np.ndarray, direction: np.ndarray,
                           s, a) -> np.ndarray:
    """Per-sample ``grad f(s_i, a_i) . direction`` by forward-mode tangents."""
    s, a = _check_indices(layout, s, a)
    if s.size == 0:
        return np.zeros(0)
    us, ua, inv = _unique_pairs(layout, s, a)
    layers = layout.unpack(theta)
    dlayers = layout.unpack(direction)
    X = _onehot(layout, us, ua)
    z = X @ layers[0][0].T + layers[0][1]
    dz = X @ dlayers[0][0].T + dlayers[0][1]
    for (W, b), (dW, db) in zip(layers[1:], dlayers[1:]):
        h = np.tanh(z)
        dh = (1.0 - h * h) * dz
        z = h @ W.T + b
        dz = dh @ W.T + h @ dW.T + db
    return dz[:, 0][inv]


def finite_difference_grad(loss: Callable[[np.ndarray], float], theta: np.ndarray,
                           h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    e = theta.copy()
    for k in range(theta.size):
        e[k] = theta[k] + h
        up = loss(e)
        e[k] = theta[k] - h
        down = loss(e)
        e[k] = theta[k]
        g[k] = (up - down) / (2.0 * h)
    return g


def format_params(layout: Layout, theta: np.ndarray) -> str:
    return layout.header() + "\n" + "\n".join(repr(float(v)) for v in theta) + "\n"


def parse_params(text: str) -> tuple[Layout, np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    layout = Layout.from_header(lines[0])
    theta = np.array([float(v) for v in lines[1:]])
    layout.unpack(theta)
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameters must be finite")
    return layout, theta
