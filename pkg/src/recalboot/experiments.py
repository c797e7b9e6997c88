"""Named experiment recipes that produce plot-ready result tables.

Every recipe is a pure function of its parameters and a base seed. Trial
``t`` of setting ``s`` draws from ``RngStream(seed, (s, t))``; within a
trial child 0 generates training data, child 1 test data and child 2 the
bags, so every correlation method in a trial is scored on the same forest.

Results use one long-format table layout (see :data:`METRIC_COLUMNS`)
plus a JSON summary holding mean and standard error per
``(dataset, setting, method, metric)`` group.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    Dataset,
    gen_correlated_outputs,
    gen_cubic,
    gen_friedman_grosse,
    gen_friedman_silverman,
    gen_tophat,
    load_csv,
    load_schema,
    split,
    cubic,
    tophat,
)
from .ensemble import fit_forest, oob_records, predict_mean
from .exceptions import ConfigError, IngestionError
from .intervals import (
    DEFAULT_P,
    CorrelationMethod,
    jackknife_covariance,
    mle_recalibration_factor,
    oob_constant_distribution,
    prediction_distribution,
    recalibrate,
    recalibrated_sigma,
    recalibration_factor,
)
from .metrics import evaluate, median_nlpd, standard_confidence
from .sequential import (
    RANDOM,
    SYNTHETIC_OBJECTIVES,
    THERMOELECTRIC_OBJECTIVES,
    SlConfig,
    run_trial,
    summarize,
)
from .stats import RngStream

__all__ = [
    "RECIPES",
    "METRIC_COLUMNS",
    "RESULTS_FORMAT",
    "ResultBundle",
    "Recipe",
    "default_params",
    "resolve_params",
    "run_recipe",
    "list_recipes",
    "validate_config",
    "load_fixture",
    "default_fixture_dir",
]

RESULTS_FORMAT = "recalboot-results/1"
METRIC_COLUMNS = ("dataset", "setting", "trial", "method", "metric", "value")
ALL_METHODS = [m.value for m in CorrelationMethod]
FIXTURES = {
    "mechanical-properties": ("mechanical_properties.csv", "mechanical_properties.yaml"),
    "thermoelectrics": ("thermoelectrics.csv", "thermoelectrics.yaml"),
}
# per-dataset defaults for the real tables: (test points, trials)
_REAL_COVARIANCE_SIZES = {"thermoelectrics": (64, 32), "mechanical-properties": (48, 32)}


# ---------------------------------------------------------------- results


@dataclass
class ResultBundle:
    """Tables and summary produced by one recipe run.

    ``tables`` maps a table name to ``(columns, rows)``. Payload files
    (CSV tables and ``summary.json``) depend only on recipe, parameters
    and seed; the wall-clock time lives in ``metadata.json`` alone.
    """

    recipe: str
    params: dict
    seed: int
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def metadata(self) -> dict:
        return {
            "format": RESULTS_FORMAT,
            "recipe": self.recipe,
            "seed": self.seed,
            "params": self.params,
            "code_version": __version__,
        }

    def table_csv(self, name: str) -> str:
        cols, rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps({**self.metadata(), "summary": self.summary}, indent=2, sort_keys=True,
                          default=_json_default) + "\n"

    def write(self, output_dir) -> list:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.tables):
            path = out / f"{name}.csv"
            path.write_text(self.table_csv(name))
            written.append(path)
        path = out / "summary.json"
        path.write_text(self.summary_json())
        written.append(path)
        meta = {**self.metadata(), "elapsed_seconds": round(self.elapsed, 3),
                "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
        path = out / "metadata.json"
        path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
        written.append(path)
        return written


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


class _Recorder:
    def __init__(self):
        self.rows = []

    def add(self, dataset, setting, trial, method, metric, value):
        self.rows.append((dataset, str(setting), int(trial), method, metric, float(value)))

    def summary(self):
        groups = {}
        for ds, setting, _, method, metric, value in self.rows:
            groups.setdefault((ds, setting, method, metric), []).append(value)
        out = []
        for (ds, setting, method, metric), vals in groups.items():
            v = np.asarray(vals, dtype=float)
            v = v[np.isfinite(v)]
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            out.append({
                "dataset": ds, "setting": setting, "method": method, "metric": metric,
                "n": int(v.size), "mean": float(v.mean()) if v.size else None,
                "stderr": se if v.size else None,
            })
        return out


# ---------------------------------------------------------------- data helpers


def default_fixture_dir() -> Path:
    """Directory of the bundled synthetic stand-in tables."""
    return Path(str(resources.files("recalboot") / "fixtures"))


def load_fixture(name: str, fixture_dir=None) -> Dataset:
    """Load a real-data table from ``fixture_dir`` (bundled stand-ins by default)."""
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")
    base = Path(fixture_dir) if fixture_dir is not None else default_fixture_dir()
    csv_name, schema_name = FIXTURES[name]
    for fname in (csv_name, schema_name):
        if not (base / fname).exists():
            raise IngestionError(
                f"missing fixture file {base / fname}; expected {csv_name} and {schema_name} "
                f"in the fixture directory (pass --fixture-dir)"
            )
    return load_csv(base / csv_name, load_schema(base / schema_name))


def _synthetic(name, n, noise, rng, multi):
    if name == "friedman-grosse":
        return gen_correlated_outputs(name, n, noise, rng) if multi else gen_friedman_grosse(n, noise, rng)
    if name == "friedman-silverman":
        return gen_correlated_outputs(name, n, noise, rng) if multi else gen_friedman_silverman(n, noise, rng)
    raise ConfigError(f"unknown synthetic dataset {name!r}")


def _train_test(name, n_train, n_test, noise, stream, multi, fixture_dir, output=None):
    if name in FIXTURES:
        data = load_fixture(name, fixture_dir)
        if output is not None:
            data = data.select_outputs([output])
        elif not multi:
            data = data.select_outputs([data.output_names[0]])
        return split(data, n_train, n_test, stream.child(0))
    return (_synthetic(name, n_train, noise, stream.child(0), multi),
            _synthetic(name, n_test, noise, stream.child(1), multi))


def _grouped(rec: _Recorder):
    return {"groups": rec.summary()}


def _table(rec: _Recorder):
    return {"metrics": (METRIC_COLUMNS, rec.rows)}


def _methods(methods):
    out = []
    for m in methods:
        out.append(CorrelationMethod(m).value)
    return out


# ---------------------------------------------------------------- recipes


def _recalibration_curves(P, root, fixture_dir):
    rec = _Recorder()
    resid_rows = []
    for t in range(P["trials"]):
        s = root.child(0, t)
        train, _ = _train_test(P["dataset"], P["n_train"], 0, P["noise"], s, False, fixture_dir,
                               P.get("output"))
        forest = fit_forest(train, P["bags"], s.child(2))
        oob = oob_records(forest)
        for p in P["p_grid"]:
            rec.add(P["dataset"], f"p={p:g}", t, "percentile", "alpha", recalibration_factor(oob, p).alpha[0])
        rec.add(P["dataset"], "all", t, "mle", "alpha", mle_recalibration_factor(oob)[0])
        r = oob.std_residual[:, 0]
        for row, val in zip(oob.rows, r):
            resid_rows.append((P["dataset"], t, int(row), float(val)))
    tables = _table(rec)
    tables["standard_residuals"] = (("dataset", "trial", "row", "standard_residual"), resid_rows)
    return tables, _grouped(rec)


def _univariate_calibration(P, root, fixture_dir):
    rec = _Recorder()
    for si, n_train in enumerate(P["n_train"]):
        for t in range(P["trials"]):
            s = root.child(si, t)
            train, test = _train_test(P["dataset"], n_train, P["n_test"], P["noise"], s, False,
                                      fixture_dir, P.get("output"))
            forest = fit_forest(train, P["bags"], s.child(2))
            recalibrate(forest, P["p"])
            rep = evaluate(prediction_distribution(forest, test.X, "trivial"), test.Y)
            for k in ("standard_error", "standard_confidence", "median_nlpd"):
                rec.add(P["dataset"], f"n_train={n_train}", t, "recalibrated-bootstrap", k, getattr(rep, k))
    return _table(rec), _grouped(rec)


def _covariance_trial(rec, dataset, setting, t, forest, test, methods):
    for m in methods:
        dist = prediction_distribution(forest, test.X, m)
        rec.add(dataset, setting, t, m, "median_nlpd", median_nlpd(dist, test.Y))
        rec.add(dataset, setting, t, m, "standard_confidence", standard_confidence(dist, test.Y))


def _covariance_metrics(P, root, fixture_dir):
    rec = _Recorder()
    methods = _methods(P["methods"])
    for di, ds in enumerate(P["datasets"]):
        n_test, trials = P["n_test"], P["trials"]
        if ds in _REAL_COVARIANCE_SIZES:
            real_test, real_trials = _REAL_COVARIANCE_SIZES[ds]
            n_test = real_test if n_test is None else n_test
            trials = real_trials if P["real_trials"] is None else P["real_trials"]
        n_test = 128 if n_test is None else n_test
        for si, n_train in enumerate(P["n_train"]):
            for t in range(trials):
                s = root.child(di, si, t)
                train, test = _train_test(ds, n_train, n_test, P["noise"], s, True, fixture_dir)
                forest = fit_forest(train, P["bags"], s.child(2))
                recalibrate(forest, P["p"])
                _covariance_trial(rec, ds, f"n_train={n_train}", t, forest, test, methods)
    return _table(rec), _grouped(rec)


def _jackknife_vs_rmse(P, root, fixture_dir):
    rec = _Recorder()
    grid_rows = []
    summary = {}
    x = np.linspace(-1.0, 1.0, P["grid"])
    for di, ds in enumerate(P["datasets"]):
        gen, fn = {"tophat": (gen_tophat, tophat), "cubic": (gen_cubic, cubic)}[ds]
        truth = fn(x)
        preds = np.empty((P["trials"], x.size))
        jk_sd = np.empty_like(preds)
        for t in range(P["trials"]):
            s = root.child(di, t)
            train = gen(P["n_train"], P["noise"], s.child(0))
            forest = fit_forest(train, P["bags"], s.child(2))
            preds[t] = predict_mean(forest, x[:, None])[:, 0]
            jk_sd[t] = np.sqrt(jackknife_covariance(forest, x[:, None]).average[:, 0, 0])
            rec.add(ds, "grid", t, "jackknife", "mean_sigma", jk_sd[t].mean())
            rec.add(ds, "grid", t, "forest", "rmse", np.sqrt(np.mean((preds[t] - truth) ** 2)))
        rmse = np.sqrt(np.mean((preds - truth) ** 2, axis=0))
        sigma = jk_sd.mean(axis=0)
        for i in range(x.size):
            grid_rows.append((ds, float(x[i]), float(truth[i]), float(preds[:, i].mean()),
                              float(sigma[i]), float(rmse[i])))
        summary[ds] = {"fraction_sigma_below_rmse": float(np.mean(sigma < rmse))}
    tables = _table(rec)
    tables["grid"] = (("dataset", "x", "truth", "mean_prediction", "jackknife_sigma", "rmse"), grid_rows)
    return tables, {**_grouped(rec), "datasets": summary}


def _standard_rmse(dist, y):
    z = (dist.mean[:, 0] - y[:, 0]) / dist.sigma[:, 0]
    return float(np.sqrt(np.mean(z * z)))


def _imbalanced(P, root, fixture_dir):
    rec = _Recorder()
    data = load_fixture(P["dataset"], fixture_dir).select_outputs([P["output"]])
    for t in range(P["trials"]):
        s = root.child(0, t)
        train, test = split(data, None, None, s.child(0), strategy="stratified",
                            stratify_by=P["stratify_by"], train_counts=P["train_counts"],
                            test_counts=P["test_counts"])
        forest = fit_forest(train, P["bags"], s.child(2))
        recalibrate(forest, P["p"])
        dists = {
            "recalibrated-bootstrap": prediction_distribution(forest, test.X, "trivial"),
            "oob-constant": oob_constant_distribution(forest, test.X, P["p"]),
        }
        for name, dist in dists.items():
            rep = evaluate(dist, test.Y)
            rec.add(P["dataset"], "imbalanced", t, name, "median_nlpd", rep.median_nlpd)
            rec.add(P["dataset"], "imbalanced", t, name, "standard_error", rep.standard_error)
            rec.add(P["dataset"], "imbalanced", t, name, "standard_rmse", _standard_rmse(dist, test.Y))
            rec.add(P["dataset"], "imbalanced", t, name, "standard_confidence", rep.standard_confidence)
    return _table(rec), _grouped(rec)


def _noise_sweep(P, root, fixture_dir):
    rec = _Recorder()
    methods = _methods(P["methods"])
    for si, noise in enumerate(P["noise"]):
        setting = f"noise={noise:g}"
        for t in range(P["trials"]):
            s = root.child(si, t)
            train = gen_friedman_grosse(P["n_train"], noise, s.child(0))
            test = gen_friedman_grosse(P["n_test"], noise, s.child(1))
            forest = fit_forest(train, P["bags"], s.child(2))
            recalibrate(forest, P["p"])
            sigma = recalibrated_sigma(forest, test.X)[:, 0]
            rec.add("friedman-grosse", setting, t, "recalibrated-bootstrap", "interval_over_noise",
                    sigma.mean() / noise)
            rec.add("friedman-grosse", setting, t, "recalibrated-bootstrap", "standard_residual",
                    np.mean(np.abs(predict_mean(forest, test.X)[:, 0] - test.Y[:, 0]) / sigma))
            train3 = gen_correlated_outputs("friedman-grosse", P["n_train"], noise, s.child(3))
            test3 = gen_correlated_outputs("friedman-grosse", P["n_test"], noise, s.child(4))
            forest3 = fit_forest(train3, P["bags"], s.child(5))
            recalibrate(forest3, P["p"])
            for m in methods:
                dist = prediction_distribution(forest3, test3.X, m)
                rec.add("friedman-grosse-3out", setting, t, m, "median_nlpd", median_nlpd(dist, test3.Y))
    return _table(rec), _grouped(rec)


def _bag_sweep(P, root, fixture_dir):
    rec = _Recorder()
    methods = _methods(P["methods"])
    for si, bags in enumerate(P["bags"]):
        for t in range(P["trials"]):
            # the same data in every bag setting; only the forest changes
            s = root.child(0, t)
            train, test = _train_test(P["dataset"], P["n_train"], P["n_test"], P["noise"], s, True, fixture_dir)
            forest = fit_forest(train, bags, s.child(2, si))
            recalibrate(forest, P["p"])
            _covariance_trial(rec, P["dataset"], f"bags={bags}", t, forest, test, methods)
    return _table(rec), _grouped(rec)


def random_expected_rounds(pool: int, winners: int) -> float:
    """Expected draws without replacement until the first winner."""
    return (pool + 1) / (winners + 1)


def _sl_study(P, root, fixture_dir):
    if P["dataset"] == "synthetic":
        from .datasets import gen_sl_synthetic

        data, objectives = gen_sl_synthetic(), SYNTHETIC_OBJECTIVES
    else:
        data, objectives = load_fixture(P["dataset"], fixture_dir), THERMOELECTRIC_OBJECTIVES
    n_initial = P["n_initial"] if P["n_initial"] is not None else (16 if P["dataset"] == "synthetic" else 32)
    trials = P["trials"] if P["trials"] is not None else (64 if P["dataset"] == "synthetic" else 16)
    rec = _Recorder()
    trace_rows = []
    summaries = []
    for mi, method in enumerate(P["methods"]):
        cfg = SlConfig(
            dataset=data, objectives=objectives, n_initial=n_initial, method=method,
            n_mc_samples=P["n_mc"], n_bags=P["bags"], p=P["p"], n_trials=trials,
            seed=root.seed,
        )
        results = [run_trial(cfg, t) for t in range(trials)]
        for r in results:
            rec.add(P["dataset"], "sl", r.trial, cfg.method, "rounds", r.rounds)
            rec.add(P["dataset"], "sl", r.trial, cfg.method, "censored", float(r.censored))
            for k, (row, score) in enumerate(r.trace, start=1):
                trace_rows.append((P["dataset"], cfg.method, r.trial, k, row, score))
        summaries.append(summarize(results, cfg.method).as_dict())
        pool, wins = cfg.pool_size, int(cfg.winners().sum())
    tables = _table(rec)
    tables["trace"] = (("dataset", "method", "trial", "round", "row", "score"), trace_rows)
    return tables, {
        "methods": summaries,
        "pool_size": pool,
        "winners": wins,
        "random_expected_rounds": random_expected_rounds(pool, wins),
    }


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    run: object
    defaults: dict
    full: dict = field(default_factory=dict)


_P_GRID = [round(0.05 * k, 2) for k in range(1, 20)] + [0.683]

RECIPES = {
    r.name: r
    for r in [
        Recipe("recalibration-curves",
               "Recalibration factor versus confidence level, with the MLE factor for comparison.",
               _recalibration_curves,
               dict(dataset="friedman-grosse", output=None, noise=2.0, n_train=128, bags=64,
                    trials=100, p_grid=sorted(_P_GRID))),
        Recipe("univariate-calibration",
               "Standard confidence, standard error and NLPD of one-output intervals.",
               _univariate_calibration,
               dict(dataset="friedman-grosse", output=None, noise=2.0, n_train=[16, 32, 64, 128, 256],
                    n_test=128, bags=64, trials=64, p=DEFAULT_P)),
        Recipe("covariance-metrics",
               "NLPD and standard confidence of the four correlation methods.",
               _covariance_metrics,
               dict(datasets=["friedman-grosse", "friedman-silverman", "thermoelectrics",
                              "mechanical-properties"], noise=2.0, n_train=[128], n_test=None,
                    bags=64, trials=16, real_trials=None, methods=list(ALL_METHODS), p=DEFAULT_P)),
        Recipe("jackknife-vs-rmse",
               "Jackknife standard deviation against the true RMSE on 1-D problems.",
               _jackknife_vs_rmse,
               dict(datasets=["tophat", "cubic"], noise=0.0, n_train=64, grid=100, bags=64, trials=250)),
        Recipe("imbalanced",
               "Recalibrated bootstrap against the OOB-constant interval under distribution shift.",
               _imbalanced,
               dict(dataset="mechanical-properties", output="youngs_modulus", stratify_by="test_type",
                    train_counts={"tension": 60, "compression": 4}, test_counts={"compression": 32},
                    bags=64, trials=50, p=DEFAULT_P)),
        Recipe("noise-sweep",
               "Interval width over noise level, and NLPD, as the noise grows.",
               _noise_sweep,
               dict(noise=[0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0], n_train=128, n_test=128, bags=64,
                    trials=100, methods=["bootstrap", "trivial"], p=DEFAULT_P)),
        Recipe("bag-sweep",
               "NLPD of the correlation methods as the number of bags varies.",
               _bag_sweep,
               dict(dataset="friedman-grosse", noise=1.0, n_train=128, n_test=128, bags=[16, 32, 64, 128],
                    trials=16, methods=list(ALL_METHODS), p=DEFAULT_P)),
        Recipe("sl-study",
               "Rounds of simulated sequential learning until a satisfying candidate is found.",
               _sl_study,
               dict(dataset="synthetic", methods=["trivial", "training-data", "jackknife", "bootstrap", RANDOM],
                    trials=None, n_initial=None, bags=64, n_mc=10_000, p=DEFAULT_P),
               full=dict(trials=64)),
    ]
}


def list_recipes() -> str:
    width = max(len(n) for n in RECIPES)
    return "\n".join(f"{r.name:<{width}}  {r.description}" for r in RECIPES.values())


def default_params(name: str, full: bool = False) -> dict:
    recipe = _recipe(name)
    params = json.loads(json.dumps(recipe.defaults))
    if full:
        params.update(recipe.full)
    return params


def _recipe(name):
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")
    return RECIPES[name]


def _coerce(key, value, default):
    """Match ``value`` to the type of the default (lists accept scalars)."""
    if isinstance(default, list):
        items = value if isinstance(value, list) else [value]
        proto = default[0] if default else None
        return [_coerce(key, v, proto) for v in items]
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    try:
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a mapping")
    return value


def resolve_params(name: str, overrides: dict | None = None, full: bool = False) -> dict:
    params = default_params(name, full)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ConfigError(f"unknown parameter {key!r} for recipe {name!r}; "
                              f"known: {', '.join(sorted(params))}")
        params[key] = _coerce(key, value, params[key])
    _check(name, params)
    return params


def _check(name, P):
    for key in ("trials", "bags", "n_train", "n_test", "real_trials", "n_initial"):
        v = P.get(key)
        for item in (v if isinstance(v, list) else [v]):
            if item is not None and item < 1:
                raise ConfigError(f"{key} must be positive")
    if "p" in P and not 0.0 < P["p"] < 1.0:
        raise ConfigError("p must lie in (0, 1)")
    if "methods" in P:
        for m in P["methods"]:
            if m != RANDOM or name != "sl-study":
                try:
                    CorrelationMethod(m)
                except ValueError:
                    raise ConfigError(f"unknown method {m!r}") from None


def run_recipe(name: str, output_dir=None, seed: int = 0, overrides: dict | None = None,
               full: bool = False, fixture_dir=None) -> ResultBundle:
    """Run a recipe and, when ``output_dir`` is given, write its files there."""
    recipe = _recipe(name)
    params = resolve_params(name, overrides, full)
    start = time.perf_counter()
    tables, summary = recipe.run(params, RngStream(int(seed)), fixture_dir)
    bundle = ResultBundle(name, params, int(seed), tables, summary, time.perf_counter() - start)
    if output_dir is not None:
        bundle.write(output_dir)
    return bundle


def validate_config(path, recipe: str | None = None):
    """Parse a YAML config and resolve it against a recipe's defaults.

    Returns ``(recipe_name, params)``. The file may name the recipe under
    a ``recipe`` key; its other keys are recipe parameters. Raises
    :class:`ConfigError` with line and column for malformed YAML and
    naming any unknown key.
    """
    import yaml

    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{path}: {where}{exc.problem or exc}") from None
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    name = raw.pop("recipe", None) or recipe
    full = bool(raw.pop("full", False))
    if name is None:
        raise ConfigError(f"{path}: no recipe named (add a 'recipe' key or pass --recipe)")
    return name, resolve_params(name, raw, full)
