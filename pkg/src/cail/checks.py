"""Invariant and oracle checks shared by the CLI and the test-suite.

Each check returns a :class:`CheckResult` holding the measured quantity next to
its tolerance, so callers can print it or assert on it.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffnet, oracle
from .airl import Discriminator, Pairs, disc_loss, disc_loss_grad
from .bilevel import Batch, BilevelConfig, beta_grad, pseudo_update
from .demos import DemoSet, RankingDataset, Trajectory
from .harness import ExperimentConfig, run_experiment
from .mdp import (TabularMDP, build_gridworld, GridSpec, expected_return, occupancy_measure,
                  soft_value_iteration, uniform_policy, value_iteration)
from .ranking import OuterObjective, RankingLossConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    seconds: float
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f" [{self.detail}]" if self.detail else ""
        return (f"{verdict} {self.name}: measured {self.measured:.3g} "
                f"(limit {self.tolerance:.3g}, {self.seconds:.1f}s){extra}")


def _result(name, measured, tol, t0, detail="", passed=None) -> CheckResult:
    ok = bool(measured <= tol) if passed is None else bool(passed)
    return CheckResult(name, float(measured), float(tol), ok, time.perf_counter() - t0, detail)


# -- random instances --------------------------------------------------------------

def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               with_terminal: bool = True) -> TabularMDP:
    T = rng.dirichlet(np.full(n_states, 0.5), size=(n_states, n_actions))
    R = rng.normal(size=(n_states, n_actions))
    terminal = np.zeros(n_states, dtype=bool)
    if with_terminal and n_states > 1:
        terminal[-1] = True
        T[-1] = 0.0
        T[-1, :, -1] = 1.0
        R[-1] = 0.0
    rho0 = rng.dirichlet(np.ones(n_states))
    return TabularMDP(T, R, rho0, float(rng.uniform(0.5, 0.95)), terminal)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def _random_layout(rng, n_states, n_actions):
    hidden = tuple(int(h) for h in rng.integers(3, 13, size=2))
    return diffnet.Layout(n_states, n_actions, hidden)


def _random_params(rng, layout):
    return 1.5 * diffnet.init_params(layout, int(rng.integers(2**31)))


def _random_pairs(rng, n, n_states, n_actions) -> Pairs:
    return Pairs(rng.integers(0, n_states, size=n), rng.integers(0, n_actions, size=n))


def _random_ranking(rng, n_states, n_actions, m, max_len=8) -> RankingDataset:
    trajs = []
    for _ in range(m):
        k = int(rng.integers(1, max_len + 1))
        trajs.append(Trajectory(rng.integers(0, n_states, size=k), rng.integers(0, n_actions, size=k)))
    returns = np.sort(rng.normal(size=m))[::-1]
    return RankingDataset(np.arange(m), returns, tuple(trajs))


def _min_gap(outer: OuterObjective, params) -> float:
    eta = outer.learned_returns(params)
    i, j = outer.iu
    return float(np.min(np.abs(eta[i] - eta[j])))


# -- checks ------------------------------------------------------------------------

def gradient_fidelity(instances: int = 20, seed: int = 0) -> CheckResult:
    """Analytic inner and outer parameter gradients against central differences."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        S, A = int(rng.integers(2, 26)), int(rng.integers(2, 5))
        layout = _random_layout(rng, S, A)
        disc = Discriminator(layout, _random_params(rng, layout))
        demo = _random_pairs(rng, int(rng.integers(3, 13)), S, A)
        gen = _random_pairs(rng, int(rng.integers(3, 13)), S, A)
        w = rng.uniform(0.0, 2.0, size=len(demo))
        g = disc_loss_grad(disc, demo, w, gen)
        fd = diffnet.finite_difference_grad(
            lambda th: disc_loss(disc.with_params(th), demo, w, gen), disc.params)
        worst = max(worst, oracle.relative_error(g, fd))

        outer = None
        for _ in range(50):  # stay clear of the |z| = eps seams
            ranking = _random_ranking(rng, S, A, int(rng.integers(3, 7)))
            outer = OuterObjective(ranking, float(rng.uniform(0.5, 0.99)), layout)
            if _min_gap(outer, disc.params) > 1e-3 and np.any(outer.grad(disc.params)):
                break
        g = outer.grad(disc.params)
        fd = diffnet.finite_difference_grad(outer.loss, disc.params)
        worst = max(worst, oracle.relative_error(g, fd))
    return _result("gradient fidelity (inner and outer vs central differences)", worst, 1e-4, t0,
                   f"{instances} instances")


def _beta_instance(rng):
    S, A = int(rng.integers(3, 10)), int(rng.integers(2, 5))
    lengths = []
    while True:
        lengths = list(rng.integers(2, 6, size=int(rng.integers(2, 5))))
        if sum(lengths) <= 16:
            break
    trajs = [Trajectory(rng.integers(0, S, size=k), rng.integers(0, A, size=k), source_level=i)
             for i, k in enumerate(lengths)]
    demos = DemoSet(trajs)
    returns = rng.normal(size=len(trajs))
    order = np.argsort(-returns, kind="stable")
    ranking = RankingDataset(order, returns[order], tuple(trajs[i] for i in order))
    layout = diffnet.Layout(S, A, (12, 12))
    disc = Discriminator(layout, _random_params(rng, layout))
    n_d = int(rng.integers(4, 13))
    idx = rng.integers(0, demos.n_pairs, size=n_d)
    batch = Batch(idx, Pairs(demos.pair_states[idx], demos.pair_actions[idx]),
                  _random_pairs(rng, int(rng.integers(4, 13)), S, A))
    beta = rng.uniform(0.3, 2.0, size=demos.n_pairs)
    return disc, demos, ranking, batch, beta


def beta_gradient_fidelity(draws: int = 10, seed: int = 1, mu: float = 0.5) -> CheckResult:
    """Closed-form confidence gradient against differences through the whole pipeline."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < draws:
        disc, demos, ranking, batch, beta = _beta_instance(rng)
        outer = OuterObjective(ranking, 0.9, disc.layout)
        theta_prime = pseudo_update(disc, beta, batch, mu)
        if _min_gap(outer, theta_prime) < 1e-3 or not np.any(outer.grad(theta_prime)):
            continue  # ranking satisfied or too close to a seam: nothing to compare
        g = beta_grad(disc, theta_prime, beta, batch, outer, mu, unsampled="exact")
        fd = oracle.fd_pipeline_beta_grad(disc, beta, batch, outer, mu, h=1e-4)
        worst = max(worst, oracle.relative_error(g, fd))
        done += 1
    return _result("confidence gradient fidelity (vs differences through the pipeline)",
                   worst, 1e-3, t0, f"{draws} draws, <= 16 pairs")


def rk_properties(eps: float = 1e-5, resolution: int = 10_000) -> list[CheckResult]:
    t0 = time.perf_counter()
    scan = oracle.rk_seam_scan(eps, resolution)
    return [
        _result("ranking loss value jump at seams", scan.value_jump, 1e-12, t0),
        _result("ranking loss derivative jump at seams", scan.derivative_jump, 1e-3, t0),
        _result("ranking loss max curvature", scan.max_curvature, 1.1 / (2 * eps), t0),
        _result("ranking loss at z = 0 equals eps/4", abs(scan.value_at_zero - eps / 4), 0.0, t0,
                passed=scan.value_at_zero == eps / 4),
    ]


def oracle_equivalence(instances: int = 10, seed: int = 2) -> CheckResult:
    """Occupancy, optimal values and the occupancy-return identity against elimination."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        S, A = int(rng.integers(2, 26)), int(rng.integers(2, 5))
        mdp = random_mdp(rng, S, A, with_terminal=bool(rng.integers(2)))
        pi = random_policy(rng, S, A)
        occ = occupancy_measure(mdp, pi)
        ref = oracle.exact_occupancy(mdp, pi)
        worst = max(worst, float(np.max(np.abs(occ.rho - ref.rho))))
        V, greedy = value_iteration(mdp)
        worst = max(worst, float(np.max(np.abs(V - oracle.exact_policy_value(mdp, greedy)))))
        eta = float(mdp.initial_dist @ oracle.exact_policy_value(mdp, pi))
        worst = max(worst, abs(float(np.sum(occ.rho * mdp.reward)) - eta))
    return _result("oracle equivalence (occupancy, values, occupancy-return identity)",
                   worst, 1e-5, t0, f"{instances} instances")


def reference_checks(seed: int = 4, monte_carlo: bool = True) -> list[CheckResult]:
    """Cheaper cross-checks of the fast paths against the brute-force references."""
    rng = np.random.default_rng(seed)
    out = []

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        S, A = int(rng.integers(2, 10)), int(rng.integers(2, 5))
        layout = _random_layout(rng, S, A)
        theta = _random_params(rng, layout)
        disc = Discriminator(layout, theta)
        demo, gen = _random_pairs(rng, 6, S, A), _random_pairs(rng, 5, S, A)
        w = rng.uniform(0, 2, size=6)
        ref = [oracle.forward_reference(layout, theta, s, a) for s, a in zip(demo.states, demo.actions)]
        worst = max(worst, float(np.max(np.abs(disc.logits(demo.states, demo.actions) - ref))))
        worst = max(worst, abs(disc_loss(disc, demo, w, gen) - oracle.disc_loss_reference(
            layout, theta, demo.states, demo.actions, w, gen.states, gen.actions)))
        ranking = _random_ranking(rng, S, A, 4)
        outer = OuterObjective(ranking, 0.9, layout, RankingLossConfig())
        worst = max(worst, abs(outer.loss(theta) - oracle.outer_loss_reference(
            layout, theta, ranking.trajectories, ranking.returns, 0.9, 1e-5)))
    out.append(_result("network and losses vs scalar references", worst, 1e-10, t0))

    t0 = time.perf_counter()
    worst = 0.0
    mdp = build_gridworld(GridSpec())
    for temp in (0.05, 0.3, 1.0):
        worst = max(worst, float(np.max(np.abs(
            soft_value_iteration(mdp, temperature=temp, tol=1e-12)
            - oracle.soft_value_sweeps(mdp, mdp.reward, temp)))))
    out.append(_result("soft planning vs plain soft backups", worst, 1e-8, t0))

    if not monte_carlo:
        return out
    t0 = time.perf_counter()
    grid = build_gridworld(GridSpec(rows=3, cols=3, goal=(2, 2)))
    pi = uniform_policy(grid)
    mean, se = oracle.monte_carlo_return(grid, pi, 100_000, 400, seed)
    exact = expected_return(grid, pi)
    out.append(_result("expected return vs Monte Carlo (standard errors)",
                       abs(mean - exact) / se, 3.0, t0, f"exact {exact:.4f}, sampled {mean:.4f}"))
    return out


def determinism(seed: int = 3, steps: int = 30) -> CheckResult:
    """Two runs of the same seed write byte-identical metric files."""
    t0 = time.perf_counter()
    cfg = ExperimentConfig(train=BilevelConfig(total_steps=steps), seeds=(seed,))
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        run_experiment(cfg, d1)
        run_experiment(cfg, d2)
        a = (Path(d1) / f"run_{seed}.csv").read_bytes()
        b = (Path(d2) / f"run_{seed}.csv").read_bytes()
    return _result("determinism (byte-identical metric files)", 0.0 if a == b else 1.0, 0.0, t0,
                   f"{len(a)} bytes")


def invariant_suite(monte_carlo: bool = True) -> list[CheckResult]:
    return [gradient_fidelity(), beta_gradient_fidelity(), *rk_properties(),
            oracle_equivalence(), *reference_checks(monte_carlo=monte_carlo), determinism()]


def oracle_suite() -> list[CheckResult]:
    return [gradient_fidelity(), beta_gradient_fidelity(), oracle_equivalence(),
            *reference_checks()]
