"""Evaluation metrics for imbalanced multi-class predictions.

Conventions for empty denominators: precision with no predicted positives
is 0; recall (and so F1) of a category with no true members is undefined,
reported as NaN and left out of macro and weighted means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PredictionSet:
    y_true: np.ndarray
    scores: np.ndarray
    y_pred: np.ndarray = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y_true, dtype=np.int64)
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or y.shape != (s.shape[0],):
            raise ValueError("scores must be n x C with one label per row")
        if y.size == 0:
            raise ValueError("empty prediction set")
        if y.min() < 0 or y.max() >= s.shape[1]:
            raise ValueError("labels out of range for the score matrix")
        if not np.allclose(s.sum(axis=1), 1.0, rtol=0.0, atol=1e-6):
            raise ValueError("score rows must sum to 1")
        object.__setattr__(self, "y_true", y)
        object.__setattr__(self, "scores", s)
        # argmax returns the first maximum, i.e. the lowest index on ties.
        object.__setattr__(self, "y_pred", np.argmax(s, axis=1))

    @property
    def n(self) -> int:
        return int(self.y_true.size)

    @property
    def n_categories(self) -> int:
        return int(self.scores.shape[1])


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class PerClassStats:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass(frozen=True)
class RocSummary:
    auc_micro: float
    auc_macro: float
    micro: RocCurve
    macro: RocCurve
    per_class: tuple[RocCurve | None, ...]
    skipped: tuple[int, ...]


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    balanced_accuracy: float
    f1_micro: float
    f1_macro: float
    f1_weighted: float
    auc_micro: float
    auc_macro: float
    confusion: ConfusionMatrix
    per_class: PerClassStats
    top_k_accuracy: dict[int, float]
    roc: RocSummary

    def scalars(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "auc_micro": self.auc_micro,
            "auc_macro": self.auc_macro,
            "top_k_accuracy": {str(k): v for k, v in sorted(self.top_k_accuracy.items())},
            "n": int(self.confusion.counts.sum()),
            "roc_skipped_categories": list(self.roc.skipped),
        }


def _as_prediction_set(pred, scores=None) -> PredictionSet:
    if isinstance(pred, PredictionSet):
        return pred
    return PredictionSet(pred, scores)


def confusion(pred: PredictionSet) -> ConfusionMatrix:
    C = pred.n_categories
    counts = np.zeros((C, C), dtype=np.int64)
    np.add.at(counts, (pred.y_true, pred.y_pred), 1)
    rows = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, rows, out=np.zeros((C, C)), where=rows > 0)
    return ConfusionMatrix(counts, normalized)


def per_class_stats(pred: PredictionSet) -> PerClassStats:
    cm = confusion(pred).counts
    tp = np.diag(cm).copy()
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    support = tp + fn
    precision = np.divide(tp, tp + fp, out=np.zeros(tp.size), where=(tp + fp) > 0)
    recall = np.divide(tp, support, out=np.full(tp.size, np.nan), where=support > 0)
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(tp.size), where=denom > 0)
    f1[support == 0] = np.nan
    return PerClassStats(tp, fp, fn, support, precision, recall, f1)


def accuracy_scores(pred: PredictionSet) -> tuple[float, float]:
    """Plain accuracy and balanced accuracy (mean recall over supported categories)."""
    correct = int((pred.y_true == pred.y_pred).sum())
    stats = per_class_stats(pred)
    supported = stats.support > 0
    return correct / pred.n, float(np.mean(stats.recall[supported]))


def f1_scores(pred: PredictionSet) -> tuple[float, float, float, PerClassStats]:
    """Micro, macro and support-weighted F1 plus the per-category table."""
    stats = per_class_stats(pred)
    tp, fp, fn = int(stats.tp.sum()), int(stats.fp.sum()), int(stats.fn.sum())
    micro = 2 * tp / (2 * tp + fp + fn)
    supported = stats.support > 0
    macro = float(np.mean(stats.f1[supported]))
    weighted = float(np.sum(stats.f1[supported] * stats.support[supported]) / stats.support[supported].sum())
    return micro, macro, weighted, stats


def roc_curve(binary_labels, scores) -> RocCurve:
    """One-vs-rest ROC. Tied scores form a single step; AUC by trapezoid."""
    y = np.asarray(binary_labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    P = int(y.sum())
    N = int(y.size - P)
    if P == 0 or N == 0:
        raise ValueError("undefined ROC: labels need at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tps = np.r_[0, np.cumsum(y)[ends]].astype(np.int64)
    fps = np.r_[0, ends + 1 - tps[1:]].astype(np.int64)
    # Trapezoid in integer counts: exact, and equal to the pairwise
    # win-plus-half-tie rate.
    area2 = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    return RocCurve(
        thresholds=np.r_[np.inf, s[ends]],
        fpr=fps / N,
        tpr=tps / P,
        auc=area2 / (2 * P * N),
    )


def aggregate_roc(pred: PredictionSet) -> RocSummary:
    """Per-category OvR curves, the pooled (micro) curve and the macro curve.

    Macro AUC is the mean of per-category AUCs; the macro curve averages
    per-category TPR linearly interpolated on the union of their FPR points.
    """
    C = pred.n_categories
    if C < 2:
        raise ValueError("ROC aggregation needs at least two categories")
    truth = np.zeros((pred.n, C), dtype=bool)
    truth[np.arange(pred.n), pred.y_true] = True
    per_class: list[RocCurve | None] = []
    skipped = []
    for c in range(C):
        pos = int(truth[:, c].sum())
        if pos == 0 or pos == pred.n:
            per_class.append(None)
            skipped.append(c)
        else:
            per_class.append(roc_curve(truth[:, c], pred.scores[:, c]))
    micro = roc_curve(truth.ravel(), pred.scores.ravel())
    curves = [r for r in per_class if r is not None]
    if curves:
        grid = np.unique(np.concatenate([r.fpr for r in curves]))
        tpr = np.mean([np.interp(grid, r.fpr, r.tpr) for r in curves], axis=0)
        macro_auc = float(np.mean([r.auc for r in curves]))
        macro = RocCurve(np.full(grid.size, np.nan), grid, tpr, macro_auc)
    else:
        macro_auc = float("nan")
        macro = RocCurve(np.zeros(0), np.zeros(0), np.zeros(0), macro_auc)
    return RocSummary(micro.auc, macro_auc, micro, macro, tuple(per_class), tuple(skipped))


def ranked_categories(scores) -> np.ndarray:
    """Category indices per row by descending score, lowest index first on ties."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), axis=1, kind="stable")


def top_k_accuracy(pred: PredictionSet, k: int) -> float:
    if not 1 <= k <= pred.n_categories:
        raise ValueError(f"k must lie in [1, {pred.n_categories}]")
    s = pred.scores
    true_score = s[np.arange(pred.n), pred.y_true][:, None]
    idx = np.arange(pred.n_categories)[None, :]
    ahead = (s > true_score) | ((s == true_score) & (idx < pred.y_true[:, None]))
    return float(np.mean(ahead.sum(axis=1) < k))


def evaluate(y_true, scores, ks=(1, 3)) -> MetricsReport:
    pred = PredictionSet(y_true, scores)
    acc, bal = accuracy_scores(pred)
    micro, macro, weighted, stats = f1_scores(pred)
    roc = aggregate_roc(pred)
    ks = sorted({k for k in ks if 1 <= k <= pred.n_categories})
    return MetricsReport(
        accuracy=acc,
        balanced_accuracy=bal,
        f1_micro=micro,
        f1_macro=macro,
        f1_weighted=weighted,
        auc_micro=roc.auc_micro,
        auc_macro=roc.auc_macro,
        confusion=confusion(pred),
        per_class=stats,
        top_k_accuracy={k: top_k_accuracy(pred, k) for k in ks},
        roc=roc,
    )


SCORERS = ("accuracy", "balanced_accuracy", "f1_micro", "f1_macro", "f1_weighted")


def score_predictions(name: str, y_true, scores) -> float:
    """Scalar score used for model selection."""
    pred = PredictionSet(y_true, scores)
    if name == "accuracy":
        return accuracy_scores(pred)[0]
    if name == "balanced_accuracy":
        return accuracy_scores(pred)[1]
    if name in ("f1_micro", "f1_macro", "f1_weighted"):
        micro, macro, weighted, _ = f1_scores(pred)
        return {"f1_micro": micro, "f1_macro": macro, "f1_weighted": weighted}[name]
    raise ValueError(f"unknown score {name!r}; choose from {SCORERS}")
