"""Confidence-aware bi-level training loop.

Each iteration draws a demo batch and a generator batch, takes a provisional
discriminator step to expose how the parameters depend on the confidences,
moves the confidences down the outer ranking loss, and then takes the real
discriminator step with the new confidences before improving the generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffnet
from .airl import (Discriminator, GeneratorState, Pairs, _sigmoid, disc_loss_coeffs,
                   generator_batch, generator_update)
from .confidence import init_confidence, level_means, normalized_weights, project
from .demos import DemoSet, RankingDataset
from .mdp import TabularMDP, expected_return, uniform_policy
from .ranking import OuterObjective, RankingLossConfig


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class BilevelConfig:
    alpha: float = 100.0
    mu: float = 0.5
    total_steps: int = 2000
    # when both are set, alpha and mu come from lr_schedule instead
    C1: float | None = None
    C2: float | None = None
    batch_size: int = 256
    gen_batch_size: int = 256
    gen_episodes: int = 32
    horizon: int = 50
    generator_updates: int = 1
    inner_steps: int = 1
    damping: float = 0.05
    gen_temperature: float = 0.02
    hidden: tuple[int, ...] = (100, 100)
    epsilon: float = 1e-5
    seed: int = 0
    snapshot_every: int = 0
    # "exact" differentiates every entry (the normaliser couples them all);
    # "zero" leaves entries absent from the batch untouched
    unsampled: str = "exact"

    def __post_init__(self):
        if self.unsampled not in ("exact", "zero"):
            raise ValueError("unsampled must be 'exact' or 'zero'")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.batch_size < 1 or self.gen_batch_size < 1:
            raise ValueError("batch sizes must be positive")
        if self.inner_steps < 1 or self.generator_updates < 0:
            raise ValueError("inner_steps must be >= 1 and generator_updates >= 0")
        alpha, mu = self.rates()
        if alpha < 0 or mu < 0:
            raise ValueError("learning rates must be nonnegative")

    def rates(self) -> tuple[float, float]:
        if self.C1 is not None and self.C2 is not None:
            return lr_schedule(max(self.total_steps, 1), self.C1, self.C2)
        return self.alpha, self.mu


def lr_schedule(T: int, C1: float, C2: float, L1_estimate: float | None = None) -> tuple[float, float]:
    """``alpha = C1 / sqrt(T)`` and ``mu = C2 / T``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if C1 <= 0:
        raise ValueError("C1 must be positive")
    if L1_estimate is not None and L1_estimate > 0 and C1 > 2.0 / L1_estimate:
        warnings.warn(f"C1={C1} exceeds 2/L1 = {2.0 / L1_estimate:.3g}; "
                      "the rate guarantee assumes C1 <= 2/L1", stacklevel=2)
    return C1 / math.sqrt(T), C2 / T


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray  # into the DemoSet pair index
    demo: Pairs
    gen: Pairs


def sample_demo_pairs(demos: DemoSet, size: int, rng: np.random.Generator):
    idx = rng.integers(0, demos.n_pairs, size=size)
    return idx, Pairs(demos.pair_states[idx], demos.pair_actions[idx])


def inner_loss_and_grad(disc: Discriminator, beta: np.ndarray, batch: Batch):
    """Weighted discriminator loss and its parameter gradient in one pass."""
    w = normalized_weights(beta, batch.indices)
    s = np.concatenate([batch.demo.states, batch.gen.states])
    a = np.concatenate([batch.demo.actions, batch.gen.actions])
    f = disc.logits(s, a)
    n_d = len(batch.demo)
    f_d, f_g = f[:n_d], f[n_d:]
    loss = (np.sum(w * np.logaddexp(0.0, -f_d)) / n_d
            + np.sum(np.logaddexp(0.0, f_g)) / len(batch.gen))
    D = _sigmoid(f)
    coeffs = np.concatenate([-w * (1.0 - D[:n_d]) / n_d, D[n_d:] / len(batch.gen)])
    return float(loss), diffnet.grad_params(disc.layout, disc.params, s, a, coeffs)


def _descend(disc: Discriminator, beta: np.ndarray, batch: Batch, mu: float, steps: int):
    theta = disc.params
    first = None
    for _ in range(steps):
        loss, g = inner_loss_and_grad(disc.with_params(theta), beta, batch)
        if first is None:
            first = (loss, g)
        theta = theta - mu * g
    return theta, first


def pseudo_update(disc: Discriminator, beta: np.ndarray, batch: Batch, mu: float,
                  steps: int = 1) -> np.ndarray:
    """Provisional parameters ``theta - mu * grad L_in(theta, beta)``; ``disc`` is untouched."""
    return _descend(disc, beta, batch, mu, steps)[0]


def theta_update(disc: Discriminator, beta_new: np.ndarray, batch: Batch, mu: float,
                 steps: int = 1) -> np.ndarray:
    return _descend(disc, beta_new, batch, mu, steps)[0]


def beta_grad(disc: Discriminator, theta_prime: np.ndarray, beta: np.ndarray, batch: Batch,
              outer: OuterObjective, mu: float, unsampled: str = "exact") -> np.ndarray:
    """Gradient of ``L_out(theta')`` with respect to the confidences.

    With ``w_k = n beta_k / S`` and ``a_k = grad L_out(theta') . grad l_k(theta)``
    for the demo loss ``l_k = -log D``, the chain rule through one descent
    step gives ``-mu n / (n_d S^2) * (S * A_i - sum_k beta_k a_k)`` where
    ``A_i`` sums ``a_k`` over batch slots holding pair ``i``. Pairs absent
    from the batch still move through the sum in the normaliser; with
    ``unsampled="zero"`` they get zero instead. When the pseudo-update takes several steps only
    the first is differentiated.
    """
    n, n_d = len(beta), len(batch.demo)
    S = float(beta.sum())
    grad = np.zeros(n)
    if mu == 0.0:
        return grad
    g_out = outer.grad(theta_prime)
    if not np.any(g_out):
        return grad
    s, a = batch.demo.states, batch.demo.actions
    jv = diffnet.directional_derivative(disc.layout, disc.params, g_out, s, a)
    D = disc.prob(s, a)
    a_k = -(1.0 - D) * jv
    A = np.bincount(batch.indices, weights=a_k, minlength=n)
    B = float(beta[batch.indices] @ a_k)
    present = np.zeros(n, dtype=bool)
    present[batch.indices] = True
    if unsampled == "exact":
        return -mu * n / (n_d * S * S) * (S * A - B)
    grad[present] = -mu * n / (n_d * S * S) * (S * A[present] - B)
    return grad


def beta_update(beta: np.ndarray, grad: np.ndarray, alpha: float) -> np.ndarray:
    if beta.shape != grad.shape:
        raise ValueError("confidence and gradient shapes differ")
    return project(beta - alpha * grad)


@dataclass
class IterationRecord:
    iter: int
    outer_loss: float
    outer_loss_prev: float
    inner_loss: float
    beta_grad_norm_sq: float
    alignment_C: float
    smoothness_L: float
    qualifying: bool
    monotone: bool
    true_return: float
    beta_level_means: dict[int, float] = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    records: list[IterationRecord] = field(default_factory=list)
    # empirical constants; none of these is a certified bound
    sigma_estimate: float = 0.0
    L_estimate: float = 0.0
    L1_estimate: float = 0.0
    aborted: str | None = None
    beta_snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def mono_tolerance(loss: float) -> float:
    return 1e-6 * (1.0 + abs(loss))


@dataclass
class CailResult:
    disc: Discriminator
    generator: GeneratorState
    beta: np.ndarray
    report: ConvergenceReport
    mu: float
    alpha: float


def initial_discriminator(mdp: TabularMDP, cfg: BilevelConfig) -> Discriminator:
    layout = diffnet.Layout(mdp.n_states, mdp.n_actions, tuple(cfg.hidden))
    init_seed, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    return Discriminator(layout, diffnet.init_params(layout, int(init_seed.generate_state(1)[0])))


def run_cail(mdp: TabularMDP, demos: DemoSet, ranking: RankingDataset, cfg: BilevelConfig,
             beta0: np.ndarray | None = None) -> CailResult:
    """Train discriminator, generator and confidences jointly for ``cfg.total_steps``.

    ``alpha = 0`` freezes the confidences at ``beta0`` (all ones by default),
    which is how the unweighted and fixed-confidence baselines run.
    """
    alpha, mu = cfg.rates()
    disc = initial_discriminator(mdp, cfg)
    _, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(batch_seed)
    gen = GeneratorState(uniform_policy(mdp), cfg.damping, cfg.gen_temperature)
    beta = init_confidence(demos.n_pairs) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (demos.n_pairs,):
        raise ValueError("initial confidence must have one entry per demonstrated pair")
    outer = OuterObjective(ranking, mdp.discount, disc.layout, RankingLossConfig(cfg.epsilon))
    report = ConvergenceReport()

    loss_prev = outer.loss(disc.params)
    g_out_prev = outer.grad(disc.params)
    g_beta_prev = None
    beta_prev = beta
    for it in range(cfg.total_steps):
        idx, demo = sample_demo_pairs(demos, cfg.batch_size, rng)
        batch = Batch(idx, demo, generator_batch(gen, mdp, cfg.gen_batch_size, cfg.horizon,
                                                 rng, cfg.gen_episodes))

        theta_prime = pseudo_update(disc, beta, batch, mu, cfg.inner_steps)
        g_beta = beta_grad(disc, theta_prime, beta, batch, outer, mu, cfg.unsampled)
        beta_new = beta_update(beta, g_beta, alpha)
        theta_new, (inner_loss, g_in) = _descend(disc, beta_new, batch, mu, cfg.inner_steps)

        loss_next = outer.loss(theta_new)
        if not (np.isfinite(loss_next) and np.isfinite(inner_loss)):
            report.aborted = (f"non-finite loss at iteration {it}: "
                              f"outer={loss_next}, inner={inner_loss}")
            break
        g_out_next = outer.grad(theta_new)
        g_in_sq = float(g_in @ g_in)
        C_hat = float(g_out_next @ g_in) / g_in_sq if g_in_sq > 0 else 0.0
        step = float(np.linalg.norm(theta_new - disc.params))
        L_hat = float(np.linalg.norm(g_out_next - g_out_prev)) / step if step > 0 else 0.0
        qualifying = C_hat >= 0 and mu * L_hat <= 2.0 * C_hat
        monotone = loss_next <= loss_prev + mono_tolerance(loss_prev)

        report.sigma_estimate = max(report.sigma_estimate, math.sqrt(g_in_sq),
                                    float(np.linalg.norm(g_out_next)))
        report.L_estimate = max(report.L_estimate, L_hat)
        if g_beta_prev is not None:
            db = float(np.linalg.norm(beta_new - beta_prev))
            if db > 0:
                report.L1_estimate = max(report.L1_estimate,
                                         float(np.linalg.norm(g_beta - g_beta_prev)) / db)
        g_beta_prev, beta_prev = g_beta, beta_new

        disc = disc.with_params(theta_new)
        beta = beta_new
        for _ in range(cfg.generator_updates):
            gen = generator_update(mdp, disc, gen)

        report.records.append(IterationRecord(
            iter=it, outer_loss=loss_next, outer_loss_prev=loss_prev, inner_loss=inner_loss,
            beta_grad_norm_sq=float(g_beta @ g_beta), alignment_C=C_hat, smoothness_L=L_hat,
            qualifying=bool(qualifying), monotone=bool(monotone),
            true_return=expected_return(mdp, gen.policy),
            beta_level_means=level_means(beta, demos.pair_level)))
        if cfg.snapshot_every and (it + 1) % cfg.snapshot_every == 0:
            report.beta_snapshots[it + 1] = beta.copy()
        loss_prev, g_out_prev = loss_next, g_out_next

    return CailResult(disc, gen, beta, report, mu, alpha)


@dataclass(frozen=True)
class Theorem1Summary:
    qualifying: int
    satisfied: int
    fraction: float
    total: int


def theorem1_check(report: ConvergenceReport, mu: float) -> Theorem1Summary:
    """Fraction of qualifying iterations on which the outer loss did not rise.

    An iteration qualifies when its measured alignment ratio is nonnegative and
    ``mu <= 2 C / L`` with the locally measured smoothness. No qualifying
    iterations is a vacuous pass.
    """
    q = s = 0
    for r in report.records:
        if r.alignment_C >= 0 and mu * r.smoothness_L <= 2.0 * r.alignment_C:
            q += 1
            s += r.outer_loss <= r.outer_loss_prev + mono_tolerance(r.outer_loss_prev)
    return Theorem1Summary(q, s, s / q if q else 1.0, len(report.records))


def grad_norm_checkpoints(report: ConvergenceReport, checkpoints) -> dict[int, float]:
    """``min_{tau <= T} ||grad_beta L_out||^2`` for each checkpoint ``T``."""
    g = report.column("beta_grad_norm_sq")
    return {int(T): float(g[:T].min()) for T in checkpoints if 0 < T <= len(g)}


def train_airl(mdp: TabularMDP, demos: DemoSet, cfg: BilevelConfig) -> list[np.ndarray]:
    """Plain unweighted AIRL with the same batch stream; returns every theta iterate."""
    _, mu = cfg.rates()
    disc = initial_discriminator(mdp, cfg)
    _, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(batch_seed)
    gen = GeneratorState(uniform_policy(mdp), cfg.damping, cfg.gen_temperature)
    thetas = [disc.params]
    for _ in range(cfg.total_steps):
        _, demo = sample_demo_pairs(demos, cfg.batch_size, rng)
        gen_pairs = generator_batch(gen, mdp, cfg.gen_batch_size, cfg.horizon, rng, cfg.gen_episodes)
        c_d, c_g = disc_loss_coeffs(disc, demo, np.ones(len(demo)), gen_pairs)
        s = np.concatenate([demo.states, gen_pairs.states])
        a = np.concatenate([demo.actions, gen_pairs.actions])
        g = diffnet.grad_params(disc.layout, disc.params, s, a, np.concatenate([c_d, c_g]))
        disc = disc.with_params(disc.params - mu * g)
        for _ in range(cfg.generator_updates):
            gen = generator_update(mdp, disc, gen)
        thetas.append(disc.params)
    return thetas


def config_dict(cfg: BilevelConfig) -> dict:
    return asdict(cfg)
