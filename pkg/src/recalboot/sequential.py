"""Simulated sequential learning over a finite pool of labelled candidates.

Each trial starts from a small training set, then repeatedly fits a
recalibrated forest, scores every unmeasured candidate by the Monte-Carlo
probability that its outputs satisfy all objectives at once, and
"measures" the best one by looking up its stored outputs. The number of
measurements needed to hit a satisfying candidate is the trial's result.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset, gen_sl_synthetic, load_csv, load_schema
from .ensemble import fit_forest
from .exceptions import ConfigError, DomainError
from .intervals import DEFAULT_P, CorrelationMethod, PredictionDistribution, prediction_distribution, recalibrate
from .stats import RngStream, cholesky_psd

__all__ = [
    "RANDOM",
    "Objective",
    "SlConfig",
    "SlTrialResult",
    "StudySummary",
    "acquisition_score",
    "satisfies",
    "forest_predictor",
    "run_trial",
    "run_study",
    "summarize",
    "sl_config_from_dict",
    "load_sl_config",
    "resolve_dataset",
    "SYNTHETIC_OBJECTIVES",
    "THERMOELECTRIC_OBJECTIVES",
]

RANDOM = "random"


class Direction(str, enum.Enum):
    GREATER = ">"
    LESS = "<"


@dataclass(frozen=True)
class Objective:
    """A threshold requirement on one output, in original units."""

    output: str
    direction: str
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction).value)
        object.__setattr__(self, "threshold", float(self.threshold))

    def test(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.direction == ">":
            return values > self.threshold
        return values < self.threshold


SYNTHETIC_OBJECTIVES = (Objective("y0", ">", 22.0), Objective("y1", ">", 22.0))
THERMOELECTRIC_OBJECTIVES = (
    Objective("zt", ">", 1.25),
    Objective("seebeck", ">", 175.0),
    Objective("power_factor", ">", 5e-3),
    Objective("kappa", ">", 1.5),
)


def satisfies(Y, objectives, output_names) -> np.ndarray:
    """Boolean per row of ``Y`` (n, d): every objective holds."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    names = list(output_names)
    ok = np.ones(Y.shape[0], dtype=bool)
    for obj in objectives:
        if obj.output not in names:
            raise DomainError(f"objective refers to unknown output {obj.output!r}")
        ok &= obj.test(Y[:, names.index(obj.output)])
    return ok


def acquisition_score(dist: PredictionDistribution, objectives, n_mc: int = 10_000, rng=0,
                      output_names=None):
    """Monte-Carlo probability that the outputs satisfy every objective.

    Works on a single distribution or a batch; a batch shares one set of
    standard-normal draws across candidates (common random numbers), which
    keeps comparisons between candidates low-noise. ``output_names``
    defaults to ``y0, y1, ...``.
    """
    mean = np.asarray(dist.mean, dtype=float)
    single = mean.ndim == 1
    cov = np.asarray(dist.cov, dtype=float)
    if single:
        mean, cov = mean[None], cov[None]
    d = mean.shape[-1]
    names = list(output_names) if output_names is not None else [f"y{j}" for j in range(d)]
    if len(names) != d:
        raise DomainError("output_names must name every output")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    z = rng.generator().standard_normal((int(n_mc), d))
    chol = cholesky_psd(cov)
    scores = np.empty(mean.shape[0])
    for i in range(mean.shape[0]):
        draws = mean[i] + z @ chol[i].T
        scores[i] = satisfies(draws, objectives, names).mean()
    return float(scores[0]) if single else scores


@dataclass(frozen=True)
class SlConfig:
    dataset: Dataset
    objectives: tuple
    n_initial: int = 16
    method: str = CorrelationMethod.BOOTSTRAP.value
    max_rounds: int | None = None
    n_mc_samples: int = 10_000
    n_bags: int = 64
    p: float = DEFAULT_P
    n_trials: int = 64
    seed: int = 0

    def __post_init__(self):
        method = str(getattr(self.method, "value", self.method))
        if method != RANDOM:
            method = CorrelationMethod(method).value
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "objectives", tuple(self.objectives))
        if not self.objectives:
            raise ConfigError("at least one objective is required")
        n = self.dataset.n_rows
        if not 2 <= self.n_initial < n:
            raise ConfigError(f"n_initial must lie in [2, {n - 1}], got {self.n_initial}")
        wins = self.winners()
        if not wins.any():
            raise ConfigError("no row of the dataset satisfies all objectives")
        if n - wins.sum() < self.n_initial:
            raise ConfigError("not enough non-satisfying rows to form the initial training set")
        if self.n_trials < 1 or self.n_mc_samples < 1 or self.n_bags < 2:
            raise ConfigError("n_trials, n_mc_samples must be >= 1 and n_bags >= 2")

    def winners(self) -> np.ndarray:
        return satisfies(self.dataset.Y, self.objectives, self.dataset.output_names)

    @property
    def pool_size(self) -> int:
        return self.dataset.n_rows - self.n_initial


@dataclass(frozen=True)
class SlTrialResult:
    """Outcome of one trial; ``trace`` holds ``(row, score)`` per round."""

    trial: int
    method: str
    rounds: int
    censored: bool
    initial_rows: tuple
    trace: tuple = field(default=())

    def __post_init__(self):
        if self.rounds < 1 or len(self.trace) != self.rounds:
            raise DomainError("a trial has at least one round and one trace entry per round")


def _initial_rows(config: SlConfig, rng: RngStream) -> np.ndarray:
    # The starting set holds no satisfying row, otherwise the search is moot.
    losers = np.flatnonzero(~config.winners())
    chosen = rng.generator().choice(losers, size=config.n_initial, replace=False)
    return np.sort(chosen)


def forest_predictor(config: SlConfig):
    """Default model: a recalibrated forest refit from scratch each round."""

    def predict(train: Dataset, X, stream: RngStream) -> PredictionDistribution:
        forest = fit_forest(train, config.n_bags, stream)
        recalibrate(forest, config.p)
        return prediction_distribution(forest, X, config.method)

    return predict


def run_trial(config: SlConfig, trial_index: int, predictor=None) -> SlTrialResult:
    """Run one sequential-learning trial.

    ``predictor(train, X, stream)`` returns the prediction distribution of
    the candidates ``X`` given the measured rows ``train``; by default it
    is :func:`forest_predictor`. It is not used by the random method.

    Streams: ``(seed, trial)`` is the trial root; child 0 draws the
    initial set, child 1 the tie-break order, and ``(2, r)``, ``(3, r)``,
    ``(4, r)`` the bags, Monte-Carlo draws and random picks of round ``r``.
    """
    data = config.dataset
    predictor = forest_predictor(config) if predictor is None else predictor
    root = RngStream(config.seed, (int(trial_index),))
    winners = config.winners()
    train = set(_initial_rows(config, root.child(0)).tolist())
    initial = tuple(sorted(train))
    # candidates in a seeded order; ties go to the earliest in this order
    order = root.child(1).generator().permutation(
        np.array([i for i in range(data.n_rows) if i not in train], dtype=np.int64)
    )
    remaining = list(order)
    cap = config.pool_size if config.max_rounds is None else min(config.max_rounds, config.pool_size)
    trace = []
    for r in range(1, cap + 1):
        if len(remaining) == 1:
            pick, score = 0, float("nan")
        elif config.method == RANDOM:
            pick = int(root.child(4, r).generator().integers(len(remaining)))
            score = float("nan")
        else:
            rows = np.array(sorted(train))
            cand = np.array(remaining)
            dist = predictor(data.subset(rows), data.X[cand], root.child(2, r))
            scores = acquisition_score(dist, config.objectives, config.n_mc_samples,
                                       root.child(3, r), data.output_names)
            if np.all(scores == 0.0):
                pick = int(root.child(4, r).generator().integers(len(remaining)))
            else:
                pick = int(np.argmax(scores))
            score = float(scores[pick])
        row = int(remaining.pop(pick))
        trace.append((row, score))
        if winners[row]:
            return SlTrialResult(trial_index, config.method, r, False, initial, tuple(trace))
        train.add(row)
    return SlTrialResult(trial_index, config.method, cap, True, initial, tuple(trace))


@dataclass(frozen=True)
class StudySummary:
    """Distribution of rounds-to-success over completed trials."""

    method: str
    n_trials: int
    n_censored: int
    mean: float
    stderr: float
    p5: float
    median: float
    p95: float

    def as_dict(self):
        return {
            "method": self.method,
            "n_trials": self.n_trials,
            "n_censored": self.n_censored,
            "mean": self.mean,
            "stderr": self.stderr,
            "p5": self.p5,
            "median": self.median,
            "p95": self.p95,
        }


def summarize(results, method: str | None = None) -> StudySummary:
    results = list(results)
    if not results:
        raise DomainError("no trial results to summarise")
    done = np.array([r.rounds for r in results if not r.censored], dtype=float)
    n_cens = sum(r.censored for r in results)
    if done.size == 0:
        nan = float("nan")
        return StudySummary(method or results[0].method, len(results), n_cens, nan, nan, nan, nan, nan)
    se = float(done.std(ddof=1) / np.sqrt(done.size)) if done.size > 1 else 0.0
    p5, med, p95 = np.percentile(done, [5, 50, 95])
    return StudySummary(
        method or results[0].method, len(results), n_cens,
        float(done.mean()), se, float(p5), float(med), float(p95),
    )


def run_study(config: SlConfig, progress=None):
    """All trials of ``config``; returns ``(results, summary)``."""
    results = []
    for t in range(config.n_trials):
        results.append(run_trial(config, t))
        if progress is not None:
            progress(results[-1])
    return results, summarize(results, config.method)


# ---------------------------------------------------------------- configuration

_CONFIG_KEYS = {
    "dataset", "objectives", "n_initial", "method", "max_rounds",
    "n_mc_samples", "n_bags", "p", "n_trials", "seed",
}


def resolve_dataset(ref, base_dir=None) -> Dataset:
    """Turn a dataset reference into a :class:`Dataset`.

    ``"sl-synthetic"`` builds the synthetic two-phase problem; a mapping
    with ``csv`` and ``schema`` paths loads a table (relative paths are
    resolved against ``base_dir``).
    """
    if isinstance(ref, Dataset):
        return ref
    if ref == "sl-synthetic":
        return gen_sl_synthetic()
    if isinstance(ref, dict) and {"csv", "schema"} <= set(ref):
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        csv_path = base / ref["csv"]
        schema_path = base / ref["schema"]
        for p in (csv_path, schema_path):
            if not p.exists():
                raise ConfigError(f"dataset file not found: {p}")
        return load_csv(csv_path, load_schema(schema_path))
    raise ConfigError(f"unrecognised dataset reference {ref!r}")


def sl_config_from_dict(raw: dict, base_dir=None) -> SlConfig:
    raw = dict(raw or {})
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown sequential-learning key(s): {', '.join(sorted(unknown))}")
    data = resolve_dataset(raw.pop("dataset", "sl-synthetic"), base_dir)
    objs = raw.pop("objectives", None)
    if objs is None:
        objectives = SYNTHETIC_OBJECTIVES
    else:
        try:
            objectives = tuple(Objective(o["output"], o["direction"], o["threshold"]) for o in objs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad objective entry: {exc}") from exc
    try:
        return SlConfig(dataset=data, objectives=objectives, **raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_sl_config(path) -> SlConfig:
    import yaml

    path = Path(path)
    with path.open() as fh:
        raw = yaml.safe_load(fh) or {}
    return sl_config_from_dict(raw, base_dir=path.parent)
