"""End-to-end training and evaluation on a fund universe.

All randomness derives from ``PipelineConfig.seed``: the train/test split
uses it directly, models use child seeds named after the model kind.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .artifact import ModelArtifact
from .metrics import MetricsReport, evaluate, ranked_categories
from .neural import DEFAULT_HIDDEN, TrainConfig, fit_mlp
from .preprocess import DesignMatrix, FittedPreprocessor, fit_preprocessor, impute_and_round, transform
from .rng import derive_seed, generator
from .sampling import StratifiedSplit, class_weights, stratified_kfold, stratified_split
from .schema import FundUniverse, IngestError, filter_min_category_count, load_csv
from .trees import (
    GINI,
    DecisionTreeModel,
    ForestParams,
    GridSearchReport,
    RandomForestModel,
    TreeParams,
    fit_forest,
    fit_tree,
    grid_search,
    importances_by_group,
)

DEFAULT_GRID = ((80, 100, 120, 140), ("gini", "entropy"))


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "rf"
    seed: int = 42
    test_frac: float = 0.25
    min_count: int = 3
    include_fund_type: bool = False
    scale_on_all: bool = False
    class_weighted: bool = True
    # trees
    criterion: str = GINI
    max_depth: int | None = None
    n_estimators: int = 100
    bootstrap: bool = True
    features_per_split: int | None = None
    # network
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    patience: int = 10
    holdout: float = 0.10
    class_weighted_loss: bool = False
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.model not in ("dt", "rf", "mlp"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0.0 < self.test_frac < 1.0:
            raise ValueError("test_frac must lie in (0, 1)")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class PreparedData:
    universe: FundUniverse
    split: StratifiedSplit
    preprocessor: FittedPreprocessor
    train: DesignMatrix
    test: DesignMatrix


def read_universe(path, min_count: int = 3, require_label: bool = True) -> FundUniverse:
    """Load, apply the category-size threshold (labeled data only), impute and round."""
    universe = load_csv(path, require_label=require_label)
    if universe.labeled and min_count > 1:
        universe = filter_min_category_count(universe, min_count)
    return impute_and_round(universe)


def universe_fingerprint(universe: FundUniverse) -> str:
    """SHA-256 over ids, types, labels and cell values; stable across runs."""
    h = hashlib.sha256()
    for part in (universe.fund_ids, universe.fund_types, universe.categories or ()):
        h.update("\x1f".join(part).encode("utf-8"))
        h.update(b"\x1e")
    h.update("\x1f".join("::".join(c) for c in universe.columns).encode("utf-8"))
    h.update(np.ascontiguousarray(universe.numeric, dtype=np.float64).tobytes())
    h.update("\x1f".join("" if v is None else v for v in universe.categorical.ravel().tolist()).encode("utf-8"))
    return h.hexdigest()


def prepare(universe: FundUniverse, config: PipelineConfig) -> PreparedData:
    if not universe.labeled:
        raise IngestError("training needs a labeled universe")
    labels = universe.labels()
    split = stratified_split(labels, config.test_frac, config.seed)
    train_u = universe.subset(split.train_indices)
    test_u = universe.subset(split.test_indices)
    names = universe.category_vocab.names
    fit_on = universe if config.scale_on_all else train_u
    prep = fit_preprocessor(fit_on, categories=names, include_fund_type=config.include_fund_type)
    return PreparedData(universe, split, prep, transform(prep, train_u), transform(prep, test_u))


def _tree_weights(config: PipelineConfig, labels, n_categories):
    if not config.class_weighted:
        return None
    return class_weights(labels, n_categories).sample_weights(labels)


def fit_model(config: PipelineConfig, train: DesignMatrix, n_categories: int, log: Callable | None = None):
    y = train.labels
    if config.model == "dt":
        params = TreeParams(config.criterion, config.max_depth)
        rng = generator(config.seed, "dt") if config.features_per_split is not None else None
        return fit_tree(train, sample_weights=_tree_weights(config, y, n_categories), params=params,
                        n_categories=n_categories, features_per_split=config.features_per_split, rng=rng)
    if config.model == "rf":
        params = ForestParams(n_estimators=config.n_estimators, criterion=config.criterion,
                              features_per_split=config.features_per_split, bootstrap=config.bootstrap,
                              seed=derive_seed(config.seed, "rf"), max_depth=config.max_depth)
        return fit_forest(train, sample_weights=_tree_weights(config, y, n_categories), params=params,
                          n_categories=n_categories)
    tc = TrainConfig(epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
                     patience=config.patience, seed=derive_seed(config.seed, "mlp"),
                     class_weighted=config.class_weighted_loss, hidden_dims=config.hidden_dims)
    return fit_mlp(train, config=tc, holdout_frac=config.holdout, n_categories=n_categories, log=log)


def train_pipeline(universe: FundUniverse, config: PipelineConfig,
                   log: Callable | None = None) -> tuple[ModelArtifact, PreparedData]:
    data = prepare(universe, config)
    model = fit_model(config, data.train, len(data.preprocessor.categories), log=log)
    metadata = {
        "seed": config.seed,
        "config": config.to_dict(),
        "data_fingerprint": universe_fingerprint(universe),
        "n_train": int(data.split.train_indices.size),
        "n_test": int(data.split.test_indices.size),
        "test_fund_ids": list(data.test.row_ids),
    }
    return ModelArtifact(config.model, data.preprocessor, model, metadata), data


def evaluation_universe(artifact: ModelArtifact, universe: FundUniverse, rows: str = "test") -> FundUniverse:
    """The held-out rows recorded at training time, or every row with ``rows="all"``."""
    if rows == "all":
        return universe
    if rows != "test":
        raise ValueError("rows must be 'test' or 'all'")
    wanted = artifact.metadata.get("test_fund_ids")
    if not wanted:
        raise IngestError("artifact records no test rows; evaluate with rows='all'")
    pos = {fid: i for i, fid in enumerate(universe.fund_ids)}
    missing = [fid for fid in wanted if fid not in pos]
    if missing:
        raise IngestError(f"{len(missing)} test fund ids absent from the data, first {missing[0]!r}")
    return universe.subset([pos[fid] for fid in wanted])


def evaluate_artifact(artifact: ModelArtifact, universe: FundUniverse, rows: str = "test",
                      ks=(1, 3)) -> MetricsReport:
    data = evaluation_universe(artifact, universe, rows)
    X = transform(artifact.preprocessor, data)
    if X.labels is None:
        raise IngestError("evaluation needs a labeled universe")
    return evaluate(X.labels, artifact.model.predict_proba(X), ks=ks)


def top_k_predictions(artifact: ModelArtifact, universe: FundUniverse, k: int) -> list[tuple[str, list]]:
    """Per fund, the ``k`` most probable categories as ``(name, probability)``, best first."""
    C = len(artifact.categories)
    if not 1 <= k <= C:
        raise ValueError(f"k must lie in [1, {C}]")
    probs = artifact.predict_proba(universe)
    order = ranked_categories(probs)[:, :k]
    out = []
    for i, fid in enumerate(universe.fund_ids):
        out.append((fid, [(artifact.categories[c], float(probs[i, c])) for c in order[i]]))
    return out


def model_importances(model) -> np.ndarray | None:
    """Normalised MDI for tree models; None for the network."""
    if isinstance(model, RandomForestModel):
        return model.importances.copy()
    if isinstance(model, DecisionTreeModel):
        raw = model.raw_importances()
        s = raw.sum()
        return raw / s if s > 0 else raw
    return None


def group_importances(model) -> list[tuple[str, float]]:
    if isinstance(model, RandomForestModel):
        return importances_by_group(model)
    return []


def run_grid_search(universe: FundUniverse, config: PipelineConfig, grid=DEFAULT_GRID, folds: int = 5,
                    score: str = "f1_weighted") -> GridSearchReport:
    """Cross-validated forest search on the training split."""
    data = prepare(universe, config)
    plan = stratified_kfold(data.train.labels, folds, derive_seed(config.seed, "folds"))
    return grid_search(data.train, None, grid, plan, score=score, class_weighted=config.class_weighted,
                       seed=derive_seed(config.seed, "rf"), n_categories=len(data.preprocessor.categories),
                       features_per_split=config.features_per_split, bootstrap=config.bootstrap)

