"""Bagged ensembles of multi-output trees.

The forest keeps the bag-count matrix ``bag_counts[b, i]`` (how many
times training row ``i`` appears in bag ``b``) so out-of-bag and
jackknife quantities can be computed after the fact. Trees are fit on
standardised outputs; public predictions are in original output units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset, Standardizer
from .exceptions import CalibrationError, DomainError
from .stats import RngStream
from .tree import TreeModel, fit_tree, pack_trees, predict_packed

__all__ = [
    "TrainedForest",
    "OobRecords",
    "draw_bag_counts",
    "fit_forest",
    "predict_mean",
    "predict_per_tree",
    "oob_records",
    "save_forest",
    "load_forest",
    "MIN_USABLE_OOB_ROWS",
]

MIN_USABLE_OOB_ROWS = 8
_FORMAT = "recalboot-forest/1"


@dataclass(eq=False)
class TrainedForest:
    trees: list
    bag_counts: np.ndarray
    X_train: np.ndarray
    Y_train: np.ndarray  # standardised
    standardizer: Standardizer
    is_categorical: np.ndarray
    input_names: tuple = ()
    output_names: tuple = ()
    categories: dict = field(default_factory=dict)
    alpha: np.ndarray | None = None
    p: float | None = None
    _packed: dict | None = field(default=None, repr=False)

    @property
    def n_bags(self) -> int:
        return len(self.trees)

    @property
    def n_train(self) -> int:
        return self.X_train.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.Y_train.shape[1]

    @property
    def packed(self) -> dict:
        if self._packed is None:
            self._packed = pack_trees(self.trees)
        return self._packed

    @property
    def n_never_oob(self) -> int:
        """Training rows that appear in every bag."""
        return int(np.sum(np.all(self.bag_counts > 0, axis=0)))

    def training_outputs(self) -> np.ndarray:
        return self.standardizer.inverse(self.Y_train)


def draw_bag_counts(n_train: int, n_bags: int, rng: RngStream) -> np.ndarray:
    """Bag-count matrix; bag ``b`` uses the sub-stream ``rng.child(b)``."""
    counts = np.empty((n_bags, n_train), dtype=np.int64)
    for b in range(n_bags):
        draws = rng.child(b).generator().integers(0, n_train, size=n_train)
        counts[b] = np.bincount(draws, minlength=n_train)
    return counts


def fit_forest(data: Dataset, n_bags: int = 64, rng: RngStream | int = 0) -> TrainedForest:
    """Fit ``n_bags`` full-depth trees on bootstrap resamples of ``data``.

    Each bag draws ``N`` rows with replacement from its own sub-stream, so
    the result does not depend on the order in which trees are built.
    """
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    n = data.n_rows
    if n < 2 or n_bags < 2:
        raise DomainError("a forest needs at least 2 training rows and 2 bags")
    std = data.standardizer
    Ys = std.transform(data.Y)
    counts = draw_bag_counts(n, n_bags, rng)
    trees = [fit_tree(data.X, Ys, counts[b], data.is_categorical) for b in range(n_bags)]
    return TrainedForest(
        trees=trees,
        bag_counts=counts,
        X_train=data.X.copy(),
        Y_train=Ys,
        standardizer=std,
        is_categorical=data.is_categorical.copy(),
        input_names=data.input_names,
        output_names=data.output_names,
        categories=dict(data.categories),
    )


def _per_tree_std(forest: TrainedForest, X) -> np.ndarray:
    return predict_packed(forest.packed, X)


def predict_per_tree(forest: TrainedForest, X, standardized: bool = False) -> np.ndarray:
    """Tree-wise predictions: (B, n, d) for a batch, (B, d) for one input."""
    single = np.ndim(X) == 1
    out = _per_tree_std(forest, X)
    if not standardized:
        out = forest.standardizer.inverse(out)
    return out[:, 0] if single else out


def predict_mean(forest: TrainedForest, X, standardized: bool = False) -> np.ndarray:
    """Ensemble mean: (n, d) for a batch, (d,) for one input."""
    single = np.ndim(X) == 1
    out = _per_tree_std(forest, X).mean(axis=0)
    if not standardized:
        out = forest.standardizer.inverse(out)
    return out[0] if single else out


@dataclass(frozen=True)
class OobRecords:
    """Out-of-bag statistics for the training rows with at least two OOB trees.

    ``oob_mean`` and ``oob_std`` are in standardised units (the standard
    deviation uses divisor ``B_i - 1``); ``std_residual`` is
    ``|oob_mean - y| / oob_std`` and is NaN where ``zero_spread``.
    ``abs_residual`` is ``|oob_mean - y|`` in original output units.
    """

    rows: np.ndarray
    n_oob_trees: np.ndarray
    oob_mean: np.ndarray
    oob_std: np.ndarray
    std_residual: np.ndarray
    abs_residual: np.ndarray
    zero_spread: np.ndarray
    n_omitted: int

    def __len__(self):
        return self.rows.size


def oob_records(forest: TrainedForest, min_rows: int = MIN_USABLE_OOB_ROWS) -> OobRecords:
    """Per-row out-of-bag mean, spread and standard residual.

    Rows that are out of bag for fewer than two trees are omitted and
    counted in ``n_omitted``. Raises :class:`CalibrationError` when fewer
    than ``min_rows`` rows remain.
    """
    preds = _per_tree_std(forest, forest.X_train)  # (B, N, d)
    oob = (forest.bag_counts == 0).astype(float)
    n_oob = oob.sum(axis=0)
    usable = n_oob >= 2
    n_usable = int(usable.sum())
    if n_usable < min_rows:
        raise CalibrationError(
            f"only {n_usable} training rows have >= 2 out-of-bag trees; need {min_rows}"
        )
    oob = oob[:, usable]
    preds = preds[:, usable]
    k = n_oob[usable][:, None]
    mean = np.einsum("bn,bnd->nd", oob, preds) / k
    dev = preds - mean[None]
    var = np.einsum("bn,bnd->nd", oob, dev * dev) / (k - 1.0)
    std = np.sqrt(var)
    resid = np.abs(mean - forest.Y_train[usable])
    zero = std <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        std_resid = np.where(zero, np.nan, resid / np.where(zero, 1.0, std))
    return OobRecords(
        rows=np.flatnonzero(usable),
        n_oob_trees=n_oob[usable].astype(int),
        oob_mean=mean,
        oob_std=std,
        std_residual=std_resid,
        abs_residual=resid * forest.standardizer.scale,
        zero_spread=zero,
        n_omitted=int(forest.n_train - n_usable),
    )


# ---------------------------------------------------------------- persistence


def save_forest(forest: TrainedForest, path) -> Path:
    """Write the forest to a self-describing ``.npz`` archive."""
    path = Path(path)
    packed = forest.packed
    meta = {
        "format": _FORMAT,
        "input_names": list(forest.input_names),
        "output_names": list(forest.output_names),
        "categories": {k: list(v) for k, v in forest.categories.items()},
        "p": forest.p,
        "n_nodes": [t.n_nodes for t in forest.trees],
        "known_shape": [list(t.known_categories.shape) for t in forest.trees],
    }
    arrays = dict(
        feature=np.concatenate([t.feature for t in forest.trees]),
        threshold=packed["threshold"],
        left=np.concatenate([t.left for t in forest.trees]),
        right=np.concatenate([t.right for t in forest.trees]),
        value=packed["value"],
        count=packed["count"],
        known=np.concatenate([t.known_categories.ravel() for t in forest.trees]),
        bag_counts=forest.bag_counts,
        X_train=forest.X_train,
        Y_train=forest.Y_train,
        y_mean=forest.standardizer.mean,
        y_scale=forest.standardizer.scale,
        is_categorical=forest.is_categorical,
        meta=np.array(json.dumps(meta)),
    )
    if forest.alpha is not None:
        arrays["alpha"] = forest.alpha
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_forest(path) -> TrainedForest:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != _FORMAT:
            raise DomainError(f"unsupported forest format {meta.get('format')!r}")
        a = {k: z[k] for k in z.files}
    is_cat = a["is_categorical"].astype(bool)
    trees = []
    start = 0
    kstart = 0
    for n_nodes, kshape in zip(meta["n_nodes"], meta["known_shape"]):
        sl = slice(start, start + n_nodes)
        ksize = kshape[0] * kshape[1]
        trees.append(TreeModel(
            feature=a["feature"][sl].copy(),
            threshold=a["threshold"][sl].copy(),
            left=a["left"][sl].copy(),
            right=a["right"][sl].copy(),
            value=a["value"][sl].copy(),
            count=a["count"][sl].copy(),
            is_categorical=is_cat,
            known_categories=a["known"][kstart:kstart + ksize].reshape(kshape).astype(bool),
        ))
        start += n_nodes
        kstart += ksize
    return TrainedForest(
        trees=trees,
        bag_counts=a["bag_counts"],
        X_train=a["X_train"],
        Y_train=a["Y_train"],
        standardizer=Standardizer(a["y_mean"], a["y_scale"]),
        is_categorical=is_cat,
        input_names=tuple(meta["input_names"]),
        output_names=tuple(meta["output_names"]),
        categories={k: tuple(v) for k, v in meta["categories"].items()},
        alpha=a.get("alpha"),
        p=meta["p"],
    )
