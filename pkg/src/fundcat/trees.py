"""Class-weighted CART trees, random forests, MDI importances and grid search.

Trees are stored as flat node arrays in preorder. Internal nodes route
``x[feature] <= threshold`` to the left child. Leaves hold the weighted
category distribution of their training rows.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .preprocess import DesignMatrix
from .rng import derive_seed, generator
from .sampling import FoldPlan, class_weights

GINI = "gini"
ENTROPY = "entropy"
CRITERIA = (GINI, ENTROPY)
_CRITERION_CODE = {GINI: 0, ENTROPY: 1}

# Slack for floating-point noise when comparing a split's gain to the threshold.
GAIN_TOLERANCE = 1e-12


def _code(criterion: str) -> int:
    try:
        return _CRITERION_CODE[criterion]
    except KeyError:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}") from None


def impurity(criterion: str, weighted_counts) -> float:
    """Gini ``1 - sum p^2`` or entropy ``-sum p log2 p`` of weighted counts."""
    counts = np.ascontiguousarray(weighted_counts, dtype=np.float64)
    if counts.ndim != 1 or (counts < 0).any():
        raise ValueError("weighted counts must be a nonnegative vector")
    if not counts.any():
        raise ValueError("impurity of an all-zero count vector is undefined")
    return float(_kernels.node_impurity(counts, _code(criterion)))


def best_split(column, labels, sample_weights=None, criterion: str = GINI):
    """Best midpoint threshold for one feature column.

    Returns ``(threshold, impurity_decrease)`` or ``None`` for a constant
    column.
    """
    x = np.ascontiguousarray(column, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if x.size != y.size or x.size < 2:
        raise ValueError("column and labels must have equal length >= 2")
    w = np.ones(x.size) if sample_weights is None else np.ascontiguousarray(sample_weights, dtype=np.float64)
    f, thr, gain, _ = _kernels.best_split(
        x.reshape(1, -1), np.arange(x.size, dtype=np.int64), np.zeros(1, dtype=np.int64),
        1, y, w, int(y.max()) + 1, _code(criterion),
    )
    return None if f < 0 else (thr, gain)


@dataclass(frozen=True)
class TreeParams:
    criterion: str = GINI
    max_depth: int | None = None
    min_samples_split: int = 2
    min_weighted_gain: float = 0.0

    def __post_init__(self):
        _code(self.criterion)
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_weighted_gain < 0:
            raise ValueError("min_weighted_gain must be nonnegative")


@dataclass(frozen=True)
class DecisionTreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_weight: np.ndarray
    gain: np.ndarray
    params: TreeParams
    n_categories: int
    n_features: int
    column_names: tuple[str, ...] = ()

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int((self.left < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = _as_rows(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.left[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.left[node[active]] >= 0]
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def raw_importances(self) -> np.ndarray:
        """Unnormalised MDI: node weight fraction times impurity decrease, per feature."""
        imp = np.zeros(self.n_features)
        internal = self.left >= 0
        if internal.any():
            contrib = self.node_weight[internal] / self.node_weight[0] * self.gain[internal]
            np.add.at(imp, self.feature[internal], contrib)
        return imp

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "node_weight": self.node_weight.tolist(),
            "gain": self.gain.tolist(),
            "params": asdict(self.params),
            "n_categories": self.n_categories,
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict, column_names: Sequence[str] = ()) -> "DecisionTreeModel":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=np.float64).reshape(-1, d["n_categories"]),
            node_weight=np.array(d["node_weight"], dtype=np.float64),
            gain=np.array(d["gain"], dtype=np.float64),
            params=TreeParams(**d["params"]),
            n_categories=int(d["n_categories"]),
            n_features=int(d["n_features"]),
            column_names=tuple(column_names),
        )


def _as_rows(X, n_features: int) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise ValueError(f"row width {X.shape[1]} does not match training width {n_features}")
    return X


def _unpack(X, y):
    if isinstance(X, DesignMatrix):
        names = X.column_names
        y = X.labels if y is None else y
        X = X.values
    else:
        names = ()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training matrix must be two-dimensional and nonempty")
    if y is None:
        raise ValueError("labels are required")
    y = np.ascontiguousarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError("labels length does not match the matrix")
    return X, y, tuple(names)


def _grow(Xt, y, w, params: TreeParams, n_categories: int, features_per_split: int | None,
          rng: np.random.Generator | None) -> dict:
    """Depth-first greedy growth over the rows with positive weight."""
    d = Xt.shape[0]
    crit = _code(params.criterion)
    max_feat = d if features_per_split is None else min(features_per_split, d)
    subsample = max_feat < d
    full_order = np.arange(d, dtype=np.int64)
    min_gain = params.min_weighted_gain - GAIN_TOLERANCE

    feature, threshold, left, right, value, weight, gain = [], [], [], [], [], [], []
    stack = [(np.flatnonzero(w > 0).astype(np.int64), 0, -1, False)]
    while stack:
        rows, depth, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        counts = np.bincount(y[rows], weights=w[rows], minlength=n_categories)
        total = counts.sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / total)
        weight.append(total)
        gain.append(0.0)

        if (
            np.count_nonzero(counts) <= 1
            or (params.max_depth is not None and depth >= params.max_depth)
            or rows.size < params.min_samples_split
        ):
            continue
        order = rng.permutation(d).astype(np.int64) if subsample else full_order
        f, thr, g, _ = _kernels.best_split(Xt, rows, order, max_feat, y, w, n_categories, crit)
        if f < 0 or g < min_gain:
            continue
        feature[node], threshold[node], gain[node] = f, thr, g
        go_left = Xt[f, rows] <= thr
        # Right pushed first so the left subtree is numbered next (preorder).
        stack.append((rows[~go_left], depth + 1, node, True))
        stack.append((rows[go_left], depth + 1, node, False))

    return dict(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64).reshape(-1, n_categories),
        node_weight=np.array(weight, dtype=np.float64),
        gain=np.array(gain, dtype=np.float64),
    )


def fit_tree(X, y=None, sample_weights=None, params: TreeParams | None = None, *,
             n_categories: int | None = None, features_per_split: int | None = None,
             rng: np.random.Generator | None = None) -> DecisionTreeModel:
    """Fit a single tree.

    ``X`` may be a :class:`DesignMatrix` (labels taken from it) or an array.
    With ``features_per_split`` set, each node inspects a fresh random
    permutation of the features drawn from ``rng`` and stops after that many
    non-constant ones.
    """
    params = params or TreeParams()
    X, y, names = _unpack(X, y)
    n_categories = int(y.max()) + 1 if n_categories is None else n_categories
    w = np.ones(X.shape[0]) if sample_weights is None else np.ascontiguousarray(sample_weights, dtype=np.float64)
    if features_per_split is not None and features_per_split < X.shape[1] and rng is None:
        raise ValueError("feature subsampling requires an rng")
    arrays = _grow(np.ascontiguousarray(X.T), y, w, params, n_categories, features_per_split, rng)
    return DecisionTreeModel(**arrays, params=params, n_categories=n_categories,
                             n_features=X.shape[1], column_names=names)


def predict_proba_tree(model: DecisionTreeModel, rows) -> np.ndarray:
    out = model.predict_proba(rows)
    return out[0] if np.ndim(rows) == 1 else out


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    criterion: str = GINI
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0
    max_depth: int | None = None
    min_samples_split: int = 2

    def resolved_features(self, d: int) -> int:
        f = math.ceil(math.sqrt(d)) if self.features_per_split is None else self.features_per_split
        if not 1 <= f <= d:
            raise ValueError(f"features_per_split must lie in [1, {d}]")
        return f

    def tree_params(self) -> TreeParams:
        return TreeParams(self.criterion, self.max_depth, self.min_samples_split)


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[DecisionTreeModel, ...]
    params: ForestParams
    n_categories: int
    n_features: int
    column_names: tuple[str, ...] = ()
    importances: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.importances is None:
            object.__setattr__(self, "importances", _mdi(self.trees, self.n_features))

    def predict_proba(self, X) -> np.ndarray:
        X = _as_rows(X, self.n_features)
        acc = np.zeros((X.shape[0], self.n_categories))
        for tree in self.trees:
            acc += tree.predict_proba(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "n_categories": self.n_categories,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, column_names: Sequence[str] = ()) -> "RandomForestModel":
        trees = tuple(DecisionTreeModel.from_dict(t, column_names) for t in d["trees"])
        return cls(trees, ForestParams(**d["params"]), int(d["n_categories"]),
                   int(d["n_features"]), tuple(column_names))


def _mdi(trees: Sequence[DecisionTreeModel], n_features: int) -> np.ndarray:
    acc = np.zeros(n_features)
    for tree in trees:
        raw = tree.raw_importances()
        s = raw.sum()
        if s > 0:
            acc += raw / s
    acc /= max(len(trees), 1)
    s = acc.sum()
    return acc / s if s > 0 else acc


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("FUNDCAT_THREADS", "1")))
    except ValueError:
        return 1


def fit_forest(X, y=None, sample_weights=None, params: ForestParams | None = None, *,
               n_categories: int | None = None) -> RandomForestModel:
    """Bagged trees with per-node feature subsampling.

    Tree ``t`` draws its bootstrap sample and feature permutations from the
    stream ``(params.seed, "tree", t)``; bootstrap multiplicities scale the
    sample weights.
    """
    params = params or ForestParams()
    if params.n_estimators < 1:
        raise ValueError("n_estimators must be positive")
    X, y, names = _unpack(X, y)
    n, d = X.shape
    n_categories = int(y.max()) + 1 if n_categories is None else n_categories
    w = np.ones(n) if sample_weights is None else np.ascontiguousarray(sample_weights, dtype=np.float64)
    fps = params.resolved_features(d)
    Xt = np.ascontiguousarray(X.T)
    tparams = params.tree_params()

    def build(t: int) -> DecisionTreeModel:
        rng = generator(params.seed, "tree", t)
        wt = w * np.bincount(rng.integers(0, n, n), minlength=n) if params.bootstrap else w
        arrays = _grow(Xt, y, wt, tparams, n_categories, fps, rng)
        return DecisionTreeModel(**arrays, params=tparams, n_categories=n_categories,
                                 n_features=d, column_names=names)

    with ThreadPoolExecutor(max_workers=n_threads()) as pool:
        trees = tuple(pool.map(build, range(params.n_estimators)))
    return RandomForestModel(trees, params, n_categories, d, names)


def predict_proba_forest(model: RandomForestModel, rows) -> np.ndarray:
    out = model.predict_proba(rows)
    return out[0] if np.ndim(rows) == 1 else out


def feature_importances(model: RandomForestModel) -> np.ndarray:
    """Mean decrease in impurity, normalised per tree, averaged, renormalised."""
    return model.importances.copy()


def importances_by_group(model: RandomForestModel) -> list[tuple[str, float]]:
    """Sum importances over source features (``group::feature``), largest first.

    One-hot columns ``group::feature=level`` fold into their source feature;
    numeric columns fold into their group.
    """
    acc: dict[str, float] = {}
    for name, v in zip(model.column_names, model.importances):
        key = name.split("=", 1)[0] if "=" in name else name.split("::", 1)[0]
        acc[key] = acc.get(key, 0.0) + float(v)
    return sorted(acc.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True)
class GridRow:
    n_estimators: int
    criterion: str
    fold_scores: tuple[float, ...]

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.fold_scores))


@dataclass(frozen=True)
class GridSearchReport:
    rows: tuple[GridRow, ...]
    score: str
    best: GridRow

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "configurations": [
                {"n_estimators": r.n_estimators, "criterion": r.criterion,
                 "fold_scores": list(r.fold_scores), "mean_score": r.mean_score}
                for r in self.rows
            ],
            "best": {"n_estimators": self.best.n_estimators, "criterion": self.best.criterion,
                     "mean_score": self.best.mean_score},
        }


def select_best(rows: Sequence[GridRow]) -> GridRow:
    """Highest mean score; ties go to fewer estimators, then gini before entropy."""
    return min(rows, key=lambda r: (-r.mean_score, r.n_estimators, CRITERIA.index(r.criterion)))


def grid_search(X, y, grid: tuple[Sequence[int], Sequence[str]], fold_plan: FoldPlan, *,
                score: str = "f1_weighted", class_weighted: bool = True, seed: int = 0,
                n_categories: int | None = None, features_per_split: int | None = None,
                bootstrap: bool = True) -> GridSearchReport:
    """Cross-validated search over (n_estimators, criterion).

    Balanced class weights are recomputed on each fold's training rows.
    Every configuration on a fold shares the fold's forest seed.
    """
    from .metrics import score_predictions

    estimators, criteria = grid
    if not estimators or not criteria:
        raise ValueError("grid must be nonempty")
    X, y, names = _unpack(X, y)
    n_categories = int(y.max()) + 1 if n_categories is None else n_categories
    folds = list(fold_plan.folds())
    rows = []
    for n_est in estimators:
        for crit in criteria:
            scores = []
            for k, (tr, va) in enumerate(folds):
                w = class_weights(y[tr], n_categories).sample_weights(y[tr]) if class_weighted else None
                params = ForestParams(n_estimators=int(n_est), criterion=crit,
                                      features_per_split=features_per_split, bootstrap=bootstrap,
                                      seed=derive_seed(seed, "gridsearch", k))
                model = fit_forest(X[tr], y[tr], w, params, n_categories=n_categories)
                scores.append(score_predictions(score, y[va], model.predict_proba(X[va])))
            rows.append(GridRow(int(n_est), crit, tuple(scores)))
    return GridSearchReport(tuple(rows), score, select_best(rows))
