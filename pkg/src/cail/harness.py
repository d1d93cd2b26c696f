"""Experiment configuration, per-seed runs of CAIL and its baselines, metric files."""

from __future__ import annotations

import csv
import io
import math
import traceback
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .bilevel import (BilevelConfig, CailResult, ConvergenceReport, grad_norm_checkpoints,
                      run_cail, theorem1_check)
from .confidence import format_confidence
from .demos import (ADVERSARIAL, DemoSet, RankingDataset, build_mixture, build_ranking_subset,
                    make_behavior_policies, mixture_counts)
from .mdp import GridSpec, build_gridworld, expected_return

SCHEMA = "cail-metrics v1"
METHODS = ("cail", "airl_unweighted", "fixed_confidence")
BASE_COLUMNS = ("iter", "outer_loss", "outer_loss_prev", "inner_loss", "beta_grad_norm_sq",
                "alignment_C", "smoothness_L", "qualifying", "monotone", "true_return")
CHECKPOINTS = (250, 500, 1000, 2000)
REFERENCE_STEPS = 2000


def reference_train() -> BilevelConfig:
    """Reference run expressed as a schedule: ``alpha = C1/sqrt(T) = 100``, ``mu = C2/T = 0.5``.

    The rates equal the constant defaults at ``T = 2000`` but rescale with ``T``.
    """
    return BilevelConfig(total_steps=REFERENCE_STEPS, C1=100.0 * math.sqrt(REFERENCE_STEPS),
                         C2=0.5 * REFERENCE_STEPS)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    temperatures: tuple = (0.001, 0.1, 0.3, 1.0, ADVERSARIAL)
    proportions: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    adversarial_temperature: float = 0.01
    total_trajectories: int = 200
    horizon: int = 50
    ranking_fraction: float = 0.05
    stratified: bool = False
    train: BilevelConfig = field(default_factory=BilevelConfig)
    method: str = "cail"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"

    def __post_init__(self):
        if len(self.temperatures) == 0:
            raise ConfigError("at least one mixture level is required")
        if len(self.temperatures) != len(self.proportions):
            raise ConfigError("mixture.temperatures and mixture.proportions differ in length")
        for t in self.temperatures:
            if t != ADVERSARIAL and not (isinstance(t, float) and t > 0):
                raise ConfigError(f"temperature {t!r} must be positive or '{ADVERSARIAL}'")
        if any(p < 0 for p in self.proportions) or not math.isclose(sum(self.proportions), 1.0,
                                                                     abs_tol=1e-9):
            raise ConfigError("mixture.proportions must be nonnegative and sum to 1")
        if self.adversarial_temperature <= 0:
            raise ConfigError("mixture.adversarial_temperature must be positive")
        if self.total_trajectories < 2 or self.horizon < 1:
            raise ConfigError("need at least 2 trajectories and horizon >= 1")
        if not 0.0 < self.ranking_fraction <= 1.0:
            raise ConfigError("ranking.fraction must lie in (0, 1]")
        if math.ceil(self.ranking_fraction * self.total_trajectories) < 2:
            raise ConfigError("ranking.fraction selects fewer than 2 trajectories")
        if self.method not in METHODS:
            raise ConfigError(f"run.method must be one of {', '.join(METHODS)}")
        if len(self.seeds) == 0:
            raise ConfigError("run.seeds needs at least one seed")
        if self.train.horizon != self.horizon:
            raise ConfigError("train.horizon is taken from mixture.horizon; do not set both")


# -- flat key=value format ---------------------------------------------------------

def _point(text: str) -> tuple[int, int]:
    r, c = (int(v) for v in text.split(","))
    return r, c


def _points(text: str) -> tuple[tuple[int, int], ...]:
    return tuple(_point(p) for p in text.split(";") if p.strip())


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _levels(text: str) -> tuple:
    out = []
    for v in text.split(","):
        v = v.strip()
        if v:
            out.append(ADVERSARIAL if v == ADVERSARIAL else float(v))
    return tuple(out)


def _opt_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


_GRID = {"rows": int, "cols": int, "start": _point, "goal": _point, "obstacles": _points,
         "step_reward": float, "goal_reward": float, "obstacle_reward": float, "slip": float,
         "discount": float, "goal_absorbing": _bool}
_TRAIN = {"alpha": float, "mu": float, "total_steps": int, "C1": _opt_float, "C2": _opt_float,
          "batch_size": int, "gen_batch_size": int, "gen_episodes": int,
          "generator_updates": int, "inner_steps": int, "damping": float,
          "gen_temperature": float, "hidden": _ints, "unsampled": str,
          "snapshot_every": int}
# key -> (ExperimentConfig field, parser)
_TOP = {"mixture.temperatures": ("temperatures", _levels),
        "mixture.proportions": ("proportions", _floats),
        "mixture.adversarial_temperature": ("adversarial_temperature", float),
        "mixture.total": ("total_trajectories", int),
        "mixture.horizon": ("horizon", int),
        "ranking.fraction": ("ranking_fraction", float),
        "ranking.stratified": ("stratified", _bool),
        "ranking.epsilon": (None, float),
        "run.method": ("method", str),
        "run.seeds": ("seeds", _ints),
        "run.output_dir": ("output_dir", str)}


def parse_config(text: str) -> ExperimentConfig:
    """Read ``section.key = value`` lines; ``#`` starts a comment.

    Unset keys keep their defaults. Errors carry the offending line number.
    """
    grid, train, top = {}, {}, {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        section, _, name = key.partition(".")
        try:
            if section == "grid" and name in _GRID:
                grid[name] = _GRID[name](value)
            elif section == "train" and name in _TRAIN:
                train[name] = _TRAIN[name](value)
            elif key in _TOP:
                target, conv = _TOP[key]
                if target is None:
                    train["epsilon"] = conv(value)
                else:
                    top[target] = conv(value)
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value for {key!r}: {exc}", lineno) from None
    return _assemble(grid, train, top, seen)


def _assemble(grid: dict, train: dict, top: dict, seen: dict) -> ExperimentConfig:
    def where(*keys):
        lines = [seen[k] for k in keys if k in seen]
        return min(lines) if lines else None

    try:
        spec = GridSpec(**grid)
        build_gridworld(spec)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}", where(*(f"grid.{k}" for k in grid))) from None
    horizon = top.get("horizon", ExperimentConfig.horizon)
    try:
        bcfg = BilevelConfig(**{**train, "horizon": horizon})
    except ValueError as exc:
        raise ConfigError(f"invalid training setup: {exc}",
                          where(*(f"train.{k}" for k in train), "ranking.epsilon")) from None
    try:
        return ExperimentConfig(grid=spec, train=bcfg, **top)
    except ConfigError as exc:
        if exc.line is None:
            raise ConfigError(str(exc), where(*(k for k in seen if not k.startswith(("grid.", "train."))))) from None
        raise


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(f"{r},{c}" for r, c in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [f"grid.{f.name} = {_fmt(getattr(cfg.grid, f.name))}" for f in fields(GridSpec)]
    for key, (target, _) in _TOP.items():
        value = cfg.train.epsilon if target is None else getattr(cfg, target)
        lines.append(f"{key} = {_fmt(value)}")
    lines += [f"train.{name} = {_fmt(getattr(cfg.train, name))}" for name in _TRAIN]
    return "\n".join(lines) + "\n"


# -- one seed ----------------------------------------------------------------------

def fixed_confidence_beta(demos: DemoSet, ranking: RankingDataset) -> np.ndarray:
    """Ranked trajectories spaced evenly from 1 (best) to 0 (worst); the rest get their mean."""
    m = len(ranking)
    traj_conf = np.full(len(demos), np.nan)
    ranks = np.argsort(-ranking.returns, kind="stable")
    spaced = np.linspace(1.0, 0.0, m)
    for r, pos in enumerate(ranks):
        traj_conf[ranking.indices[pos]] = spaced[r]
    traj_conf[np.isnan(traj_conf)] = spaced.mean()
    return traj_conf[demos.pair_traj]


@dataclass
class RunLog:
    seed: int
    method: str
    n_levels: int
    report: ConvergenceReport | None = None
    behavior_returns: tuple[float, ...] = ()
    demo_weighted_return: float = float("nan")
    final_beta: np.ndarray | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None and self.report.aborted is None

    @property
    def final_return(self) -> float:
        if self.report is None or not self.report.records:
            return float("nan")
        return self.report.records[-1].true_return

    def final_level_means(self) -> dict[int, float]:
        if self.report is None or not self.report.records:
            return {}
        return dict(self.report.records[-1].beta_level_means)

    def theorem1_fraction(self, mu: float) -> float:
        return theorem1_check(self.report, mu).fraction

    def checkpoint_minima(self) -> dict[int, float]:
        return grad_norm_checkpoints(self.report, CHECKPOINTS)


def _seed_streams(seed: int) -> tuple[int, int]:
    demo_ss, rank_ss = np.random.SeedSequence([seed, 7]).spawn(2)
    return int(demo_ss.generate_state(1)[0]), int(rank_ss.generate_state(1)[0])


def prepare_data(cfg: ExperimentConfig, seed: int):
    mdp = build_gridworld(cfg.grid)
    policies = make_behavior_policies(mdp, cfg.temperatures, cfg.adversarial_temperature)
    demo_seed, rank_seed = _seed_streams(seed)
    demos = build_mixture(mdp, policies, cfg.proportions, cfg.total_trajectories, cfg.horizon,
                          demo_seed)
    ranking = build_ranking_subset(demos, mdp, cfg.ranking_fraction, rank_seed, cfg.stratified)
    return mdp, policies, demos, ranking


def method_config(cfg: ExperimentConfig, seed: int) -> BilevelConfig:
    train = replace(cfg.train, seed=seed)
    if cfg.method == "cail":
        return train
    _, mu = train.rates()
    return replace(train, alpha=0.0, mu=mu, C1=None, C2=None)


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[RunLog, CailResult]:
    mdp, policies, demos, ranking = prepare_data(cfg, seed)
    train = method_config(cfg, seed)
    beta0 = fixed_confidence_beta(demos, ranking) if cfg.method == "fixed_confidence" else None
    result = run_cail(mdp, demos, ranking, train, beta0)
    returns = tuple(expected_return(mdp, p) for p in policies)
    counts = mixture_counts(cfg.proportions, cfg.total_trajectories)
    weighted = float(np.dot(counts, returns) / sum(counts))
    log = RunLog(seed, cfg.method, len(cfg.temperatures), result.report, returns, weighted,
                 result.beta, result.report.aborted)
    return log, result


# -- files -------------------------------------------------------------------------

def csv_columns(n_levels: int) -> list[str]:
    return list(BASE_COLUMNS) + [f"beta_mean_level_{k}" for k in range(n_levels)]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_csv(report: ConvergenceReport, n_levels: int) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(n_levels))
    for r in report.records:
        row = [getattr(r, c) for c in BASE_COLUMNS]
        row += [r.beta_level_means.get(k, float("nan")) for k in range(n_levels)]
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text()
    first, _, rest = text.partition("\n")
    if first.strip() != f"# {SCHEMA}":
        raise ValueError(f"{path}: missing schema header '# {SCHEMA}'")
    rows = list(csv.reader(io.StringIO(rest)))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))


def write_run(out: Path, log: RunLog, result: CailResult | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if log.report is not None:
        (out / f"run_{log.seed}.csv").write_text(format_csv(log.report, log.n_levels))
        for it, beta in sorted(log.report.beta_snapshots.items()):
            snap = out / f"snapshots_{log.seed}"
            snap.mkdir(exist_ok=True)
            (snap / f"beta_{it}.txt").write_text(format_confidence(beta))


@dataclass
class MetricsLog:
    config: ExperimentConfig
    runs: list[RunLog]

    @property
    def failed(self) -> list[RunLog]:
        return [r for r in self.runs if not r.ok]


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> MetricsLog:
    """Run every seed in isolation, write ``run_<seed>.csv`` and ``summary.txt``."""
    out_dir = Path(out if out is not None else cfg.output_dir)
    runs = []
    for seed in cfg.seeds:
        try:
            log, result = run_seed(cfg, seed)
        except Exception as exc:  # one seed failing must not stop the others
            log, result = RunLog(seed, cfg.method, len(cfg.temperatures),
                                 error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"), None
        write_run(out_dir, log, result)
        runs.append(log)
    metrics = MetricsLog(cfg, runs)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(serialize_config(cfg))
    (out_dir / "summary.txt").write_text(emit_summary([metrics]))
    return metrics


def run_baseline_fixed_confidence(cfg: ExperimentConfig, out: str | Path | None = None) -> MetricsLog:
    return run_experiment(replace(cfg, method="fixed_confidence"), out)


# -- summaries ---------------------------------------------------------------------

def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation (ddof = 0)."""
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std())


def emit_summary(logs: list[MetricsLog]) -> str:
    """Per-run rows followed by per-method mean +- population std of the final return."""
    if not logs:
        raise ValueError("need at least one log")
    lines = ["# final true expected return; spread is population std (ddof=0) over seeds",
             "method\tseed\tfinal_return\ttheorem1_fraction\tdemo_weighted_return\tbeta_level_means"]
    by_method: dict[str, list[float]] = {}
    for metrics in logs:
        _, mu = method_config(metrics.config, 0).rates()
        for run in metrics.runs:
            if not run.ok:
                lines.append(f"{run.method}\t{run.seed}\tFAILED\t-\t-\t{(run.error or '').splitlines()[0]}")
                continue
            means = run.final_level_means()
            level_txt = " ".join(f"{k}:{means[k]:.4f}" for k in sorted(means))
            lines.append(f"{run.method}\t{run.seed}\t{run.final_return:.6f}\t"
                         f"{run.theorem1_fraction(mu):.4f}\t{run.demo_weighted_return:.6f}\t{level_txt}")
            by_method.setdefault(run.method, []).append(run.final_return)
    lines.append("")
    lines.append("method\truns\tmean\tstd")
    for method, values in by_method.items():
        m, s = mean_std(values)
        lines.append(f"{method}\t{len(values)}\t{m:.6f}\t{s:.6f}")
    return "\n".join(lines) + "\n"


def summarize_dir(path: str | Path) -> str:
    """Summary table recomputed from the ``run_<seed>.csv`` files in a directory."""
    path = Path(path)
    files = sorted(path.glob("run_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise FileNotFoundError(f"no run_<seed>.csv files in {path}")
    lines = ["# final true expected return; spread is population std (ddof=0) over seeds",
             "seed\titerations\tfinal_return\ttheorem1_fraction\tbeta_level_means"]
    finals = []
    for f in files:
        header, data = read_csv(f)
        if len(data) == 0:
            lines.append(f"{f.stem.split('_')[1]}\t0\t-\t-\t-")
            continue
        col = {name: data[:, i] for i, name in enumerate(header)}
        q = col["qualifying"] > 0
        frac = float(col["monotone"][q].mean()) if q.any() else 1.0
        levels = [n for n in header if n.startswith("beta_mean_level_")]
        level_txt = " ".join(f"{n.rsplit('_', 1)[1]}:{col[n][-1]:.4f}" for n in levels)
        finals.append(col["true_return"][-1])
        lines.append(f"{f.stem.split('_')[1]}\t{len(data)}\t{finals[-1]:.6f}\t{frac:.4f}\t{level_txt}")
    if finals:
        m, s = mean_std(finals)
        lines += ["", f"mean\t{m:.6f}", f"std\t{s:.6f}"]
    return "\n".join(lines) + "\n"
