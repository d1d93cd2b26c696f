"""Acceptance criteria on the reference 5x5 gridworld.

Each test prints one PASS/FAIL line (shown even under output capture) and then
asserts. The three reference experiments (CAIL and unweighted AIRL on the full
mixture, CAIL without the near-optimal level) run once per session.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from cail import checks, cli
from cail.bilevel import theorem1_check
from cail.harness import CHECKPOINTS, ExperimentConfig, reference_train, run_experiment

SEEDS = (0, 1, 2, 3, 4)


def reference_config(**kw) -> ExperimentConfig:
    return replace(ExperimentConfig(train=reference_train(), seeds=SEEDS), **kw)


def announce(capsys, number: int, passed: bool, text: str) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} criterion {number}: {text}")


def announce_check(capsys, number: int, results) -> bool:
    passed = all(r.passed for r in results)
    announce(capsys, number, passed, "; ".join(r.line() for r in results))
    return passed


@pytest.fixture(scope="session")
def reference(tmp_path_factory):
    out = {}
    for key, cfg in (("cail", reference_config()),
                     ("airl", reference_config(method="airl_unweighted"))):
        t0 = time.perf_counter()
        out[key] = run_experiment(cfg, tmp_path_factory.mktemp(key))
        out[key + "_seconds"] = time.perf_counter() - t0
    base = reference_config()
    no_expert = replace(base, temperatures=base.temperatures[1:], proportions=(0.25,) * 4)
    out["no_expert"] = run_experiment(no_expert, tmp_path_factory.mktemp("no_expert"))
    for key in ("cail", "airl", "no_expert"):
        failed = out[key].failed
        assert not failed, f"{key}: seeds {[r.seed for r in failed]} failed"
    return out


def test_criterion_1_gradient_fidelity(capsys):
    r = checks.gradient_fidelity(instances=20)
    passed = r.passed and r.seconds < 60
    announce(capsys, 1, passed, f"{r.line()}; runtime limit 60s")
    assert passed, r.line()


def test_criterion_2_confidence_gradient_fidelity(capsys):
    r = checks.beta_gradient_fidelity(draws=10)
    passed = r.passed and r.seconds < 120
    announce(capsys, 2, passed, f"{r.line()}; runtime limit 120s")
    assert passed, r.line()


def test_criterion_3_ranking_loss_smoothness(capsys):
    results = checks.rk_properties(eps=1e-5, resolution=10_000)
    assert announce_check(capsys, 3, results)


def test_criterion_4_outer_loss_monotone_on_qualifying_iterations(capsys, reference):
    mu = reference["cail"].config.train.rates()[1]
    summaries = [theorem1_check(r.report, mu) for r in reference["cail"].runs]
    fractions = [s.fraction for s in summaries]
    passed = min(fractions) >= 0.9
    detail = ", ".join(f"seed {r.seed}: {s.satisfied}/{s.qualifying}"
                       for r, s in zip(reference["cail"].runs, summaries))
    announce(capsys, 4, passed, f"min fraction {min(fractions):.3f} (limit 0.9) [{detail}]")
    assert passed


def test_criterion_5_gradient_norm_trend(capsys, reference):
    bad = []
    lines = []
    for run in reference["cail"].runs:
        minima = run.checkpoint_minima()
        values = [minima[T] for T in CHECKPOINTS]
        if any(b > a for a, b in zip(values, values[1:])) or len(values) != len(CHECKPOINTS):
            bad.append(run.seed)
        lines.append(f"seed {run.seed}: " + " ".join(f"{v:.2e}" for v in values))
    passed = not bad
    announce(capsys, 5, passed, f"prefix minima nonincreasing on {5 - len(bad)}/5 seeds "
                                f"[{'; '.join(lines)}]")
    assert passed


def test_criterion_6_confidence_separation(capsys, reference):
    separated, correlated = 0, 0
    rows = []
    for run in reference["cail"].runs:
        means = run.final_level_means()
        levels = sorted(means)
        separated += means[levels[0]] > means[levels[-1]]
        rho = spearmanr([means[k] for k in levels], run.behavior_returns).statistic
        correlated += bool(rho >= 0.7)
        rows.append(f"seed {run.seed}: best {means[levels[0]]:.3g} vs adversarial "
                    f"{means[levels[-1]]:.3g}, rho {rho:.2f}")
    passed = separated == 5 and correlated >= 4
    announce(capsys, 6, passed, f"separated on {separated}/5 (need 5), rank correlation >= 0.7 "
                                f"on {correlated}/5 (need 4) [{'; '.join(rows)}]")
    assert passed


def test_criterion_7_cail_beats_unweighted_airl(capsys, reference):
    cail = np.mean([r.final_return for r in reference["cail"].runs])
    airl = np.mean([r.final_return for r in reference["airl"].runs])
    minutes = (reference["cail_seconds"] + reference["airl_seconds"]) / 60
    passed = cail >= airl and minutes <= 30
    announce(capsys, 7, passed, f"mean final return CAIL {cail:.4f} vs AIRL {airl:.4f}; "
                                f"pair of runs took {minutes:.1f} min (limit 30)")
    assert passed


def test_criterion_8_learning_from_suboptimal_only(capsys, reference):
    wins = 0
    rows = []
    for run in reference["no_expert"].runs:
        wins += run.final_return > run.demo_weighted_return
        rows.append(f"seed {run.seed}: {run.final_return:.3f} vs {run.demo_weighted_return:.3f}")
    passed = wins >= 4
    announce(capsys, 8, passed, f"beats demo-weighted return on {wins}/5 seeds (need 4) "
                                f"[{'; '.join(rows)}]")
    assert passed


def test_criterion_9_oracle_equivalence(capsys):
    r = checks.oracle_equivalence(instances=10)
    assert announce_check(capsys, 9, [r]), r.line()


def test_criterion_10_cli_run_is_deterministic(capsys, tmp_path):
    from cail.harness import serialize_config

    conf = tmp_path / "reference.txt"
    conf.write_text(serialize_config(reference_config(seeds=(0,))))
    codes = [cli.main(["run", "--config", str(conf), "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    a = (tmp_path / "a" / "run_0.csv").read_bytes()
    b = (tmp_path / "b" / "run_0.csv").read_bytes()
    passed = codes == [0, 0] and a == b
    announce(capsys, 10, passed, f"exit codes {codes}, CSVs {'identical' if a == b else 'differ'} "
                                 f"({len(a)} bytes)")
    assert passed
