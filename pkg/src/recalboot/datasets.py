"""Synthetic test problems, standardisation, splitting and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .exceptions import DomainError, IngestionError
from .stats import RngStream

__all__ = [
    "Dataset",
    "Standardizer",
    "CsvSchema",
    "ColumnSpec",
    "tophat",
    "cubic",
    "friedman_grosse",
    "friedman_silverman",
    "gen_tophat",
    "gen_cubic",
    "gen_friedman_grosse",
    "gen_friedman_silverman",
    "gen_correlated_outputs",
    "add_noise",
    "add_linear_correlated_output",
    "add_quadratic_output",
    "gen_sl_synthetic",
    "SL_SYNTHETIC_SEED",
    "load_csv",
    "load_schema",
    "split",
]

# FG maximum: 10 + 5 + 10 + 5
FRIEDMAN_GROSSE_MAX = 30.0
# yields exactly two rows with both outputs above 22
SL_SYNTHETIC_SEED = 3


def _generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class Standardizer:
    """Per-output affine map to mean 0 and (population) variance 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, Y) -> "Standardizer":
        Y = np.asarray(Y, dtype=float)
        mean = Y.mean(axis=0)
        scale = Y.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, Y):
        return (np.asarray(Y, dtype=float) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (n, p) and real outputs ``Y`` (n, d).

    Categorical inputs are stored in ``X`` as integer codes into
    ``categories[name]``.
    """

    X: np.ndarray
    Y: np.ndarray
    input_names: tuple
    output_names: tuple
    is_categorical: np.ndarray
    categories: dict = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "is_categorical", np.asarray(self.is_categorical, dtype=bool))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))
        if X.shape[0] != Y.shape[0]:
            raise DomainError("X and Y row counts differ")
        if len(self.input_names) != X.shape[1] or self.is_categorical.size != X.shape[1]:
            raise DomainError("input names/kinds do not match X")
        if len(self.output_names) != Y.shape[1]:
            raise DomainError("output names do not match Y")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.Y.shape[1]

    @property
    def standardizer(self) -> Standardizer:
        return Standardizer.fit(self.Y)

    def __len__(self):
        return self.n_rows

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], Y=self.Y[rows])

    def output_index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.n_outputs:
                raise DomainError(f"output index {name} out of range")
            return int(name)
        try:
            return self.output_names.index(name)
        except ValueError:
            raise DomainError(f"unknown output {name!r}") from None

    def input_index(self, name) -> int:
        try:
            return self.input_names.index(name)
        except ValueError:
            raise DomainError(f"unknown input {name!r}") from None

    def select_outputs(self, names) -> "Dataset":
        cols = [self.output_index(n) for n in names]
        return replace(self, Y=self.Y[:, cols], output_names=tuple(self.output_names[c] for c in cols))

    def with_output(self, name: str, values) -> "Dataset":
        values = np.asarray(values, dtype=float).reshape(-1, 1)
        return replace(self, Y=np.hstack([self.Y, values]), output_names=self.output_names + (name,))


# ---------------------------------------------------------------- test functions


def tophat(x):
    ax = np.abs(np.asarray(x, dtype=float))
    return np.where(ax < 0.33, 1.0, np.where(ax < 0.67, 0.5, 0.0))


def cubic(x):
    return np.asarray(x, dtype=float) ** 3


def friedman_grosse(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def friedman_silverman(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (
        0.1 * np.exp(4.0 * X[:, 0])
        + 4.0 / (1.0 + np.exp(-20.0 * (X[:, 1] - 0.5)))
        + 3.0 * X[:, 2]
        + 2.0 * X[:, 3]
        + X[:, 4]
    )


def _real_dataset(X, y, provenance):
    X = np.atleast_2d(X)
    p = X.shape[1]
    return Dataset(X, y, [f"x{i}" for i in range(p)], ["y0"], np.zeros(p, bool), provenance=provenance)


def add_noise(data: Dataset, noise: float, rng) -> Dataset:
    """Add ``noise * N(0, 1)`` independently to every output entry."""
    if noise < 0:
        raise DomainError("noise must be non-negative")
    if noise == 0:
        return data
    gen = _generator(rng)
    return replace(data, Y=data.Y + noise * gen.standard_normal(data.Y.shape))


def gen_tophat(n: int, noise: float, rng) -> Dataset:
    gen = _generator(rng)
    x = gen.uniform(-1.0, 1.0, size=(n, 1))
    return add_noise(_real_dataset(x, tophat(x[:, 0]), "tophat"), noise, gen)


def gen_cubic(n: int, noise: float, rng) -> Dataset:
    gen = _generator(rng)
    x = gen.uniform(-1.0, 1.0, size=(n, 1))
    return add_noise(_real_dataset(x, cubic(x[:, 0]), "cubic"), noise, gen)


def gen_friedman_grosse(n: int, noise: float, rng, n_dims: int = 8) -> Dataset:
    if n_dims < 5:
        raise DomainError("Friedman-Grosse needs at least 5 input dimensions")
    gen = _generator(rng)
    X = gen.random((n, n_dims))
    return add_noise(_real_dataset(X, friedman_grosse(X), "friedman-grosse"), noise, gen)


def gen_friedman_silverman(n: int, noise: float, rng, n_dims: int = 12) -> Dataset:
    if n_dims < 5:
        raise DomainError("Friedman-Silverman needs at least 5 input dimensions")
    gen = _generator(rng)
    X = gen.random((n, n_dims))
    return add_noise(_real_dataset(X, friedman_silverman(X), "friedman-silverman"), noise, gen)


def _linear_correlated(y0, rho, gen):
    """Column whose sample Pearson correlation with ``y0`` is exactly ``rho``."""
    z = gen.standard_normal(y0.size)
    yc = y0 - y0.mean()
    m = (yc @ z) / (yc @ yc)
    z_orth = z - m * yc
    return rho * z_orth.std() * y0 + np.sqrt(1.0 - rho**2) * y0.std() * z_orth


def add_linear_correlated_output(data: Dataset, rho: float, rng, source=0, name: str = "y1") -> Dataset:
    """Append an output with sample correlation exactly ``rho`` to ``source``.

    A standard-normal column is made orthogonal to the centred source by
    least squares and mixed with it so that both pieces carry the same
    variance.
    """
    if not -1.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [-1, 1]")
    if data.n_rows < 3:
        raise DomainError("need at least 3 rows")
    y0 = data.Y[:, data.output_index(source)]
    if np.ptp(y0) == 0.0:
        raise DomainError("source output is constant")
    return data.with_output(name, _linear_correlated(y0, rho, _generator(rng)))


def add_quadratic_output(data: Dataset, f: float, rng, source=0, name: str = "y2") -> Dataset:
    """Append ``(y0 - mean(y0))**2 + f * N(0, 1)``."""
    if data.n_rows < 2:
        raise DomainError("need at least 2 rows")
    y0 = data.Y[:, data.output_index(source)]
    y2 = (y0 - y0.mean()) ** 2 + f * _generator(rng).standard_normal(y0.size)
    return data.with_output(name, y2)


def gen_correlated_outputs(base: str, n: int, noise: float, rng, rho: float = 0.9, f: float = 0.5) -> Dataset:
    """Three-output calibration problem built on a noiseless Friedman function.

    The two extra outputs are derived from the noiseless first output and
    then ``noise * N(0, 1)`` is added to all three independently.
    """
    gen = _generator(rng)
    makers = {"friedman-grosse": gen_friedman_grosse, "friedman-silverman": gen_friedman_silverman}
    if base not in makers:
        raise DomainError(f"unknown base problem {base!r}")
    data = makers[base](n, 0.0, gen)
    data = add_linear_correlated_output(data, rho, gen)
    data = add_quadratic_output(data, f, gen)
    return add_noise(replace(data, provenance=f"{base}-3out"), noise, gen)


def gen_sl_synthetic(rng=SL_SYNTHETIC_SEED, n: int = 128, rho: float = 0.98) -> Dataset:
    """Two-output sequential-learning problem with a categorical ``phase`` input.

    Phase A rows get a second output linearly correlated with the first
    (exact ``rho`` within the phase); phase B rows get
    ``sqrt(30**2 - y**2)``, which is anti-correlated with it.
    """
    gen = _generator(rng)
    X = gen.random((n, 8))
    phase = gen.integers(0, 2, size=n)
    y0 = friedman_grosse(X)
    y1 = np.empty(n)
    a = phase == 0
    if a.sum() >= 3:
        y1[a] = _linear_correlated(y0[a], rho, gen)
    else:
        y1[a] = y0[a]
    y1[~a] = np.sqrt(np.clip(FRIEDMAN_GROSSE_MAX**2 - y0[~a] ** 2, 0.0, None))
    names = [f"x{i}" for i in range(8)] + ["phase"]
    kinds = np.r_[np.zeros(8, bool), True]
    return Dataset(
        np.c_[X, phase], np.c_[y0, y1], names, ["y0", "y1"], kinds,
        categories={"phase": ("A", "B")}, provenance="sl-synthetic",
    )


# ---------------------------------------------------------------- CSV ingestion


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "real" | "categorical"
    role: str  # "input" | "output" | "filter"
    min: float | None = None
    max: float | None = None
    levels: tuple | None = None


@dataclass(frozen=True)
class CsvSchema:
    columns: tuple
    complete_rows: bool = True
    dedup_average: bool = True
    provenance: str = ""

    @property
    def inputs(self):
        return [c for c in self.columns if c.role == "input"]

    @property
    def outputs(self):
        return [c for c in self.columns if c.role == "output"]


_COLUMN_KEYS = {"type", "role", "min", "max", "levels"}
_SCHEMA_KEYS = {"columns", "complete_rows", "dedup_average", "provenance"}


def schema_from_dict(raw: dict) -> CsvSchema:
    if not isinstance(raw, dict):
        raise IngestionError("schema must be a mapping")
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise IngestionError(f"unknown schema key(s): {sorted(unknown)}")
    cols = []
    for name, spec in (raw.get("columns") or {}).items():
        spec = spec or {}
        bad = set(spec) - _COLUMN_KEYS
        if bad:
            raise IngestionError(f"column {name!r}: unknown key(s) {sorted(bad)}")
        kind = spec.get("type", "real")
        role = spec.get("role", "input")
        if kind not in ("real", "categorical"):
            raise IngestionError(f"column {name!r}: type must be real or categorical")
        if role not in ("input", "output", "filter"):
            raise IngestionError(f"column {name!r}: role must be input, output or filter")
        if role == "output" and kind != "real":
            raise IngestionError(f"column {name!r}: outputs must be real")
        levels = spec.get("levels")
        cols.append(ColumnSpec(
            str(name), kind, role, spec.get("min"), spec.get("max"),
            tuple(str(v) for v in levels) if levels is not None else None,
        ))
    schema = CsvSchema(
        tuple(cols),
        bool(raw.get("complete_rows", True)),
        bool(raw.get("dedup_average", True)),
        str(raw.get("provenance", "")),
    )
    if not schema.inputs or not schema.outputs:
        raise IngestionError("schema needs at least one input and one output column")
    return schema


def load_schema(path) -> CsvSchema:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    return schema_from_dict(raw)


def load_csv(path, schema) -> Dataset:
    """Read a pre-featurised CSV and apply the schema's preparation rules.

    Rules run in order: drop rows with any empty schema cell (when
    ``complete_rows``), apply ``min``/``max`` range filters, then average
    the outputs of rows whose inputs are identical (when ``dedup_average``).
    """
    path = Path(path)
    if not isinstance(schema, CsvSchema):
        schema = load_schema(schema)
    if not path.exists():
        raise IngestionError(f"CSV file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    col_at = {}
    for c in schema.columns:
        if c.name not in header:
            raise IngestionError(f"{path}: schema column {c.name!r} not in header")
        col_at[c.name] = header.index(c.name)

    kept = []
    for lineno, row in enumerate(rows, start=2):
        cells = {}
        complete = True
        for c in schema.columns:
            j = col_at[c.name]
            cell = row[j].strip() if j < len(row) else ""
            if cell == "":
                complete = False
                cells[c.name] = None
                continue
            if c.kind == "real":
                try:
                    cells[c.name] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {lineno}, column {c.name!r}: cannot parse {cell!r} as a number"
                    ) from None
            else:
                cells[c.name] = cell
        if not complete:
            if schema.complete_rows:
                continue
            raise IngestionError(f"{path}: row {lineno} has missing values")
        in_range = True
        for c in schema.columns:
            v = cells[c.name]
            if c.kind == "real" and ((c.min is not None and v < c.min) or (c.max is not None and v > c.max)):
                in_range = False
        if in_range:
            kept.append(cells)
    if not kept:
        raise IngestionError(f"{path}: no rows left after preparation")

    categories = {}
    for c in schema.inputs:
        if c.kind != "categorical":
            continue
        present = sorted({r[c.name] for r in kept})
        if c.levels is not None:
            extra = [v for v in present if v not in c.levels]
            if extra:
                raise IngestionError(f"{path}: column {c.name!r} has undeclared level(s) {extra}")
            categories[c.name] = c.levels
        else:
            categories[c.name] = tuple(present)

    X = np.array([
        [categories[c.name].index(r[c.name]) if c.kind == "categorical" else r[c.name] for c in schema.inputs]
        for r in kept
    ], dtype=float)
    Y = np.array([[r[c.name] for c in schema.outputs] for r in kept], dtype=float)
    if schema.dedup_average:
        uniq, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        sums = np.zeros((uniq.shape[0], Y.shape[1]))
        np.add.at(sums, inverse, Y)
        counts = np.bincount(inverse, minlength=uniq.shape[0])
        # keep first-appearance order
        first = np.full(uniq.shape[0], len(inverse))
        np.minimum.at(first, inverse, np.arange(len(inverse)))
        order = np.argsort(first)
        X = uniq[order]
        Y = (sums / counts[:, None])[order]
    return Dataset(
        X, Y,
        [c.name for c in schema.inputs],
        [c.name for c in schema.outputs],
        [c.kind == "categorical" for c in schema.inputs],
        categories=categories,
        provenance=schema.provenance or path.stem,
    )


# ---------------------------------------------------------------- splitting


def split(data: Dataset, n_train: int, n_test: int, rng, strategy: str = "uniform",
          stratify_by: str | None = None, train_counts: dict | None = None,
          test_counts: dict | None = None):
    """Disjoint train/test split.

    ``strategy="uniform"`` draws ``n_train`` then ``n_test`` rows at random.
    ``strategy="stratified"`` draws explicit per-level counts of the
    categorical input ``stratify_by``; ``n_train``/``n_test`` must equal
    the totals of ``train_counts``/``test_counts`` (or be None).
    """
    gen = _generator(rng)
    if strategy == "uniform":
        if n_train < 1 or n_test < 0 or n_train + n_test > data.n_rows:
            raise DomainError(f"cannot draw {n_train} + {n_test} rows from {data.n_rows}")
        perm = gen.permutation(data.n_rows)
        return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:n_train + n_test]))
    if strategy != "stratified":
        raise DomainError(f"unknown split strategy {strategy!r}")
    if stratify_by is None or train_counts is None or test_counts is None:
        raise DomainError("stratified split needs stratify_by, train_counts and test_counts")
    col = data.input_index(stratify_by)
    if not data.is_categorical[col]:
        raise DomainError(f"{stratify_by!r} is not categorical")
    levels = data.categories.get(stratify_by, ())
    if n_train is not None and n_train != sum(train_counts.values()):
        raise DomainError("n_train disagrees with train_counts")
    if n_test is not None and n_test != sum(test_counts.values()):
        raise DomainError("n_test disagrees with test_counts")
    train_rows, test_rows = [], []
    for level in sorted(set(train_counts) | set(test_counts), key=str):
        code = levels.index(level) if level in levels else None
        if code is None:
            raise DomainError(f"unknown level {level!r} of {stratify_by!r}")
        pool = np.flatnonzero(data.X[:, col] == code)
        k_tr = int(train_counts.get(level, 0))
        k_te = int(test_counts.get(level, 0))
        if k_tr + k_te > pool.size:
            raise DomainError(f"level {level!r} has {pool.size} rows, need {k_tr + k_te}")
        perm = gen.permutation(pool)
        train_rows.extend(perm[:k_tr])
        test_rows.extend(perm[k_tr:k_tr + k_te])
    return data.subset(np.sort(train_rows)), data.subset(np.sort(test_rows))
